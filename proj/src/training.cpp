#include "deformer/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include "deformer/error.hpp"
#include "deformer/random.hpp"

namespace deformer::train {

static_assert(std::endian::native == std::endian::little, "checkpoints assume little endian");

double learning_rate(double base, double decay, std::size_t every, std::size_t epoch) {
  if (every == 0) throw ConfigError("lr decay interval must be positive");
  return base * std::pow(decay, static_cast<double>(epoch / every));
}

double clip_gradients(Gradients& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double v : g) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& g : grads) {
      for (double& v : g) v *= scale;
    }
  }
  return norm;
}

Adam::Adam(std::vector<Tensor> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step(const Gradients& grads, double lr) {
  if (grads.size() != params_.size()) throw ShapeError("Adam: gradient count mismatch");
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  std::vector<double> values;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& g = grads[i];
    if (g.size() != params_[i].numel()) throw ShapeError("Adam: gradient size mismatch");
    values = params_[i].to_vector();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!std::isfinite(g[k])) throw NumericError("Adam: non-finite gradient");
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      values[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
    params_[i].assign(values);
  }
}

void Adam::restore(std::uint64_t steps, std::vector<std::vector<double>> m,
                   std::vector<std::vector<double>> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) {
    throw CompatibilityError("Adam: state does not match the parameter list");
  }
  for (std::size_t i = 0; i < m_.size(); ++i) {
    if (m[i].size() != m_[i].size() || v[i].size() != v_[i].size()) {
      throw CompatibilityError("Adam: state size mismatch");
    }
  }
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

SequenceTarget make_target(const synth::SequenceSample& sample,
                           const hand::KinematicTemplate& tmpl) {
  const std::size_t steps = sample.steps();
  Tensor beta = add(Tensor::zeros({steps, hand::kShapeDim}),
                    reshape(sample.gt_beta, {1, hand::kShapeDim}));
  SequenceTarget target;
  target.mesh = hand::hand_forward(sample.gt_theta, beta, tmpl, true);
  target.joints2d = synth::ground_truth_2d(sample, tmpl);
  return target;
}

std::vector<double> visibility_weights(const synth::SequenceSample& sample) {
  std::vector<double> w;
  w.reserve(sample.occlusion.size());
  for (double o : sample.occlusion) w.push_back(std::clamp(1.0 - o, 0.0, 1.0));
  return w;
}

GeneratorStep generator_losses(DeformerModel& model, const synth::SequenceSample& sample,
                               const SequenceTarget& target) {
  const Config& cfg = model.config();
  const bool use_max = cfg.loss.max_mse;
  std::optional<std::vector<double>> external;
  if (cfg.train.aggregation == AggregationMode::WeightedExternal) {
    external = visibility_weights(sample);
  }
  GeneratorOutput out = model.forward(sample.grids, cfg.train.aggregation, external);
  const TemporalOutput& tp = out.temporal;

  GeneratorStep step;
  LossTerms& terms = step.terms;
  terms.mesh = mesh_loss(out.mesh, target.mesh, use_max);
  terms.l2d = l2d(out.joints2d, target.joints2d);
  terms.monocular = monocular_loss(tp.monocular_pose, tp.monocular_shape, sample.gt_theta,
                                   sample.gt_beta, target.mesh, model.hand_template(), use_max);
  const Tensor motion_ref = cfg.loss.motion_target == MotionTarget::GroundTruth
                                ? sample.gt_theta
                                : tp.pose.detach();
  terms.motion = motion_loss(tp.pose, tp.motion_fw, tp.motion_bw, motion_ref, use_max);
  if (cfg.train.smoothness) {
    terms.smooth = smooth_loss(out.fused, cfg.loss.smooth_first, cfg.loss.smooth_second);
  }
  const Tensor& fake =
      cfg.train.discriminator_input == DiscriminatorInput::Fused ? out.fused : tp.pose;
  if (cfg.train.discriminator) terms.adv = adv_generator_loss(model.discriminate(fake));
  step.fake = fake.detach();
  auto [total, report] = total_loss(terms, cfg.loss);
  step.total = total;
  step.report = report;
  return step;
}

namespace {

std::vector<Tensor> parameter_list(const nn::ParameterStore& store) {
  std::vector<Tensor> out;
  for (const auto& p : store.parameters()) out.push_back(p.value);
  return out;
}

Gradients collect(const GradientMap& grads, const std::vector<Tensor>& params) {
  Gradients out;
  out.reserve(params.size());
  for (const auto& p : params) {
    if (grads.contains(p)) {
      out.push_back(grads.at(p).to_vector());
    } else {
      out.emplace_back(p.numel(), 0.0);
    }
  }
  return out;
}

void accumulate(Gradients& into, const Gradients& part) {
  if (into.empty()) {
    into = part;
    return;
  }
  for (std::size_t i = 0; i < into.size(); ++i) {
    for (std::size_t k = 0; k < into[i].size(); ++k) into[i][k] += part[i][k];
  }
}

void check_finite(const Gradients& grads, const nn::ParameterStore& store) {
  for (std::size_t i = 0; i < grads.size(); ++i) {
    for (double v : grads[i]) {
      if (!std::isfinite(v)) {
        throw NumericError("non-finite gradient for " + store.parameters()[i].name);
      }
    }
  }
}

// ---- binary io ------------------------------------------------------------

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw IoError("cannot write " + path);
  }
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void text(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(std::span<const double> v) {
    out_.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  void close() {
    out_.close();
    if (!out_) throw IoError("failed writing " + path_);
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot open " + path);
  }
  void raw(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw IoError("truncated checkpoint " + path_);
  }
  template <typename T>
  T pod() {
    T v;
    raw(&v, sizeof v);
    return v;
  }
  std::string text(std::size_t limit = std::size_t{1} << 24) {
    const auto n = pod<std::uint32_t>();
    if (n > limit) throw IoError("corrupt checkpoint " + path_);
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }

 private:
  std::ifstream in_;
  std::string path_;
};

constexpr char kMagic[4] = {'D', 'F', 'R', 'M'};

void store_blobs(Checkpoint& ckpt, const std::string& prefix, const nn::ParameterStore& store) {
  for (const auto& p : store.parameters()) ckpt.blobs[prefix + p.name] = p.value.detach();
}

void store_adam(Checkpoint& ckpt, const std::string& prefix, const nn::ParameterStore& store,
                const Adam& opt) {
  const auto& params = store.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Shape& s = params[i].value.shape();
    ckpt.blobs[prefix + "m/" + params[i].name] = Tensor(s, opt.first_moments()[i]);
    ckpt.blobs[prefix + "v/" + params[i].name] = Tensor(s, opt.second_moments()[i]);
  }
  ckpt.blobs[prefix + "steps"] = Tensor({1}, {static_cast<double>(opt.steps())});
}

const Tensor& blob(const Checkpoint& ckpt, const std::string& name, const Shape& shape) {
  auto it = ckpt.blobs.find(name);
  if (it == ckpt.blobs.end()) throw CompatibilityError("checkpoint lacks " + name);
  if (it->second.shape() != shape) {
    throw CompatibilityError("checkpoint entry " + name + " has shape " +
                             shape_string(it->second.shape()) + ", expected " +
                             shape_string(shape));
  }
  return it->second;
}

void restore_blobs(const Checkpoint& ckpt, const std::string& prefix,
                   const nn::ParameterStore& store) {
  for (const auto& p : store.parameters()) {
    p.value.assign(blob(ckpt, prefix + p.name, p.value.shape()).data());
  }
}

void restore_adam(const Checkpoint& ckpt, const std::string& prefix,
                  const nn::ParameterStore& store, Adam& opt) {
  std::vector<std::vector<double>> m, v;
  for (const auto& p : store.parameters()) {
    m.push_back(blob(ckpt, prefix + "m/" + p.name, p.value.shape()).to_vector());
    v.push_back(blob(ckpt, prefix + "v/" + p.name, p.value.shape()).to_vector());
  }
  const auto steps = static_cast<std::uint64_t>(blob(ckpt, prefix + "steps", {1})[0]);
  opt.restore(steps, std::move(m), std::move(v));
}

constexpr std::size_t kHistoryFields = 8;

}  // namespace

// ---- checkpoint files -------------------------------------------------------

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string tmp = path + ".tmp";
  {
    Writer w(tmp);
    w.pod(kMagic);
    w.pod(ckpt.version);
    w.pod(ckpt.config_hash);
    w.pod(ckpt.epoch);
    w.pod(ckpt.step);
    w.text(config_to_text(ckpt.config));
    w.pod(static_cast<std::uint32_t>(ckpt.blobs.size()));
    for (const auto& [name, t] : ckpt.blobs) {
      w.text(name);
      w.pod(static_cast<std::uint32_t>(t.ndim()));
      for (std::size_t d : t.shape()) w.pod(static_cast<std::uint64_t>(d));
      w.doubles(t.data());
    }
    w.close();
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path + ": " + ec.message());
}

Checkpoint read_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw IoError(path + " is not a checkpoint");
  Checkpoint ckpt;
  ckpt.version = r.pod<std::uint32_t>();
  if (ckpt.version != kCheckpointVersion) {
    throw CompatibilityError("unsupported checkpoint version " + std::to_string(ckpt.version));
  }
  ckpt.config_hash = r.pod<std::uint64_t>();
  ckpt.epoch = r.pod<std::uint64_t>();
  ckpt.step = r.pod<std::uint64_t>();
  ckpt.config = parse_config(r.text());
  if (hash_text(config_to_text(ckpt.config)) != ckpt.config_hash) {
    throw IoError("checkpoint configuration does not match its hash");
  }
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t b = 0; b < count; ++b) {
    std::string name = r.text(4096);
    const auto ndim = r.pod<std::uint32_t>();
    if (ndim > 8) throw IoError("corrupt checkpoint entry " + name);
    Shape shape;
    for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(r.pod<std::uint64_t>());
    const std::size_t n = shape_numel(shape);
    if (n > (std::size_t{1} << 32)) throw IoError("corrupt checkpoint entry " + name);
    std::vector<double> values(n);
    r.raw(values.data(), n * sizeof(double));
    ckpt.blobs.emplace(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return ckpt;
}

std::unique_ptr<DeformerModel> load_model(const std::string& path) {
  Checkpoint ckpt = read_checkpoint(path);
  auto model = std::make_unique<DeformerModel>(ckpt.config);
  restore_blobs(ckpt, "generator/", model->generator_parameters());
  restore_blobs(ckpt, "discriminator/", model->discriminator_parameters());
  return model;
}

void write_loss_log(const std::string& path, const std::vector<LossReport>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << LossReport::csv_header() << '\n';
  for (std::size_t i = 0; i < history.size(); ++i) out << history[i].csv_row(i + 1) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

// ---- trainer ------------------------------------------------------------------

Trainer::Trainer(const Config& config, const std::vector<synth::SequenceSample>& train_set)
    : config_(config),
      data_(train_set),
      model_(std::make_unique<DeformerModel>(config)),
      generator_params_(parameter_list(model_->generator_parameters())),
      discriminator_params_(parameter_list(model_->discriminator_parameters())),
      generator_opt_(generator_params_),
      discriminator_opt_(discriminator_params_) {
  config_.validate();
  if (data_.empty()) throw ConfigError("training set is empty");
  targets_.reserve(data_.size());
  for (const auto& s : data_) targets_.push_back(make_target(s, model_->hand_template()));
}

std::vector<std::vector<std::size_t>> Trainer::epoch_batches(std::size_t epoch) const {
  std::vector<std::size_t> order(data_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(config_.train.seed, {0x5348554646ULL, epoch});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  const std::size_t bs = config_.train.batch_size;
  for (std::size_t i = 0; i < order.size(); i += bs) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(i + bs, order.size())));
  }
  return batches;
}

LossReport Trainer::train_step(const std::vector<std::size_t>& batch) {
  if (batch.empty()) throw ConfigError("empty batch");
  for (std::size_t i : batch) {
    if (i >= data_.size()) throw std::out_of_range("batch index out of range");
  }
  const TrainConfig& tc = config_.train;
  const double scale = 1.0 / static_cast<double>(batch.size());

  // Generator phase.
  struct Part {
    Gradients grads;
    LossReport report;
    Tensor fake;
    std::exception_ptr error;
  };
  std::vector<Part> parts(batch.size());
  {
    FreezeGuard frozen(model_->discriminator_parameters());
    auto run = [&](std::size_t b) {
      try {
        Tape tape;
        TapeScope scope(tape);
        GeneratorStep g = generator_losses(*model_, data_[batch[b]], targets_[batch[b]]);
        GradientMap grads = backward(mul(g.total, scale));
        parts[b].grads = collect(grads, generator_params_);
        parts[b].report = g.report;
        parts[b].fake = g.fake;
      } catch (...) {
        parts[b].error = std::current_exception();
      }
    };
    if (threads_ <= 1 || batch.size() == 1) {
      for (std::size_t b = 0; b < batch.size(); ++b) run(b);
    } else {
      std::vector<std::thread> pool;
      const std::size_t workers = std::min(threads_, batch.size());
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          for (std::size_t b = w; b < batch.size(); b += workers) run(b);
        });
      }
      for (auto& t : pool) t.join();
    }
  }
  for (const auto& p : parts) {
    if (p.error) std::rethrow_exception(p.error);
  }

  Gradients grads;
  LossReport report;
  for (const auto& p : parts) {
    accumulate(grads, p.grads);
    report.mesh += p.report.mesh * scale;
    report.adv += p.report.adv * scale;
    report.l2d += p.report.l2d * scale;
    report.monocular += p.report.monocular * scale;
    report.motion += p.report.motion * scale;
    report.smooth += p.report.smooth * scale;
    report.total += p.report.total * scale;
  }
  check_finite(grads, model_->generator_parameters());
  clip_gradients(grads, tc.grad_clip);
  generator_opt_.step(grads, learning_rate(tc.lr_generator, tc.lr_decay, tc.lr_decay_every, epoch_));

  // Discriminator phase.
  if (tc.discriminator) {
    std::vector<Tensor> fakes, reals;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      fakes.push_back(parts[b].fake);
      const std::uint64_t seed = derive_seed(tc.seed, {0x5245414cULL, step_, b});
      reals.push_back(synth::sample_trajectory(seed, config_.data.seq_len, config_.data.stride).theta);
    }
    Tape tape;
    TapeScope scope(tape);
    Tensor loss =
        discriminator_loss(model_->discriminate(fakes), model_->discriminate(reals));
    report.disc = loss.item();
    if (!std::isfinite(report.disc)) throw NumericError("non-finite discriminator loss");
    Gradients dgrads = collect(backward(loss), discriminator_params_);
    check_finite(dgrads, model_->discriminator_parameters());
    clip_gradients(dgrads, tc.grad_clip);
    discriminator_opt_.step(
        dgrads, learning_rate(tc.lr_discriminator, tc.lr_decay, tc.lr_decay_every, epoch_));
  }

  ++step_;
  history_.push_back(report);
  return report;
}

void Trainer::fit(const FitOptions& options) {
  namespace fs = std::filesystem;
  if (!options.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(options.out_dir, ec);
    if (ec) throw IoError("cannot create " + options.out_dir + ": " + ec.message());
  }
  std::size_t epochs_run = 0;
  while (epoch_ < config_.train.epochs) {
    if (options.max_epochs != 0 && epochs_run >= options.max_epochs) return;
    const auto batches = epoch_batches(epoch_);
    const std::size_t first = step_ - std::min(step_, epoch_ * batches.size());
    for (std::size_t b = first; b < batches.size(); ++b) {
      if (options.max_steps != 0 && step_ >= options.max_steps) return;
      LossReport r = train_step(batches[b]);
      if (options.on_step) options.on_step(step_, r);
    }
    ++epoch_;
    ++epochs_run;
    if (!options.out_dir.empty()) {
      save_checkpoint((fs::path(options.out_dir) / "checkpoint.dfrm").string());
      write_loss_log((fs::path(options.out_dir) / "train_log.csv").string(), history_);
    }
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt;
  ckpt.config = config_;
  ckpt.config_hash = hash_text(config_to_text(config_));
  ckpt.epoch = epoch_;
  ckpt.step = step_;
  store_blobs(ckpt, "generator/", model_->generator_parameters());
  store_blobs(ckpt, "discriminator/", model_->discriminator_parameters());
  store_adam(ckpt, "adam/generator/", model_->generator_parameters(), generator_opt_);
  store_adam(ckpt, "adam/discriminator/", model_->discriminator_parameters(), discriminator_opt_);
  std::vector<double> hist;
  hist.reserve(history_.size() * kHistoryFields);
  for (const auto& r : history_) {
    hist.insert(hist.end(),
                {r.mesh, r.adv, r.l2d, r.monocular, r.motion, r.smooth, r.total, r.disc});
  }
  ckpt.blobs["history"] = Tensor({history_.size(), kHistoryFields}, std::move(hist));
  return ckpt;
}

void Trainer::save_checkpoint(const std::string& path) const { write_checkpoint(path, checkpoint()); }

void Trainer::resume(const std::string& path) {
  Checkpoint ckpt = read_checkpoint(path);
  if (ckpt.config_hash != hash_text(config_to_text(config_))) {
    throw CompatibilityError("checkpoint " + path + " was trained with a different configuration");
  }
  restore_blobs(ckpt, "generator/", model_->generator_parameters());
  restore_blobs(ckpt, "discriminator/", model_->discriminator_parameters());
  restore_adam(ckpt, "adam/generator/", model_->generator_parameters(), generator_opt_);
  restore_adam(ckpt, "adam/discriminator/", model_->discriminator_parameters(), discriminator_opt_);
  auto it = ckpt.blobs.find("history");
  if (it == ckpt.blobs.end() || it->second.ndim() != 2 || it->second.shape()[1] != kHistoryFields ||
      it->second.shape()[0] != ckpt.step) {
    throw CompatibilityError("checkpoint history is malformed");
  }
  history_.clear();
  const auto h = it->second.data();
  for (std::size_t i = 0; i < ckpt.step; ++i) {
    const double* r = h.data() + i * kHistoryFields;
    LossReport rep;
    rep.mesh = r[0];
    rep.adv = r[1];
    rep.l2d = r[2];
    rep.monocular = r[3];
    rep.motion = r[4];
    rep.smooth = r[5];
    rep.total = r[6];
    rep.disc = r[7];
    history_.push_back(rep);
  }
  epoch_ = ckpt.epoch;
  step_ = ckpt.step;
}

}  // namespace deformer::train
