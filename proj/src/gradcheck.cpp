#include "deformer/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <random>

#include "deformer/config.hpp"
#include "deformer/discriminator.hpp"
#include "deformer/error.hpp"
#include "deformer/fusion.hpp"
#include "deformer/handmodel.hpp"
#include "deformer/losses.hpp"
#include "deformer/model.hpp"
#include "deformer/random.hpp"
#include "deformer/spatial.hpp"
#include "deformer/synthdata.hpp"
#include "deformer/temporal.hpp"
#include "deformer/training.hpp"

namespace deformer::gradcheck {

namespace {

constexpr double kStep = 1e-5;
constexpr double kResolution = 1e-6;

struct Instance {
  std::vector<Tensor> leaves;
  std::function<Tensor()> loss;
};

using Builder = std::function<Instance(std::mt19937_64&)>;

struct Check {
  std::string name;
  Builder build;
};

std::vector<double> uniform(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

Tensor leaf(std::mt19937_64& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = shape_numel(s);
  return Tensor::leaf(std::move(s), uniform(rng, n, lo, hi));
}

Tensor constant(std::mt19937_64& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = shape_numel(s);
  return Tensor(std::move(s), uniform(rng, n, lo, hi));
}

// Values bounded away from zero (kinks of relu, poles of div/log).
Tensor away_from_zero(std::mt19937_64& rng, Shape s, double lo, double hi) {
  std::vector<double> v = uniform(rng, shape_numel(s), lo, hi);
  std::bernoulli_distribution sign(0.5);
  for (double& x : v) x = sign(rng) ? x : -x;
  return Tensor::leaf(std::move(s), std::move(v));
}

// Wraps a differentiable map of the leaves into a probed scalar loss.
Instance probed(std::mt19937_64& rng, std::vector<Tensor> leaves,
                std::function<Tensor()> f) {
  const Tensor shape_probe = f().detach();
  Tensor w(shape_probe.shape(), uniform(rng, shape_probe.numel(), 0.5, 1.5));
  return {std::move(leaves), [f = std::move(f), w] { return sum(mul(f(), w)); }};
}

std::vector<Tensor> with_parameters(std::vector<Tensor> leaves, const nn::ParameterStore& store) {
  for (const auto& p : store.parameters()) leaves.push_back(p.value);
  return leaves;
}

// Central differences at step h resolve a derivative only to about
// 1e-16 |f| / h, so coordinates below kResolution * max(1, |f|) are compared
// against that floor instead of their own magnitude.
double max_error(const Instance& inst, std::size_t& coordinates) {
  std::vector<std::vector<double>> analytic;
  double f0 = 0.0;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = inst.loss();
    f0 = loss.item();
    if (loss.requires_grad()) {
      GradientMap grads = backward(loss);
      for (const auto& l : inst.leaves) analytic.push_back(grads.get_or_zero(l).to_vector());
    } else {
      for (const auto& l : inst.leaves) analytic.emplace_back(l.numel(), 0.0);
    }
  }
  const double floor = kResolution * std::max(1.0, std::abs(f0));
  auto eval = [&] {
    const double v = inst.loss().item();
    if (!std::isfinite(v)) throw NumericError("gradcheck: non-finite loss");
    return v;
  };
  double worst = 0.0;
  coordinates = 0;
  for (std::size_t k = 0; k < inst.leaves.size(); ++k) {
    const Tensor& x = inst.leaves[k];
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const double original = x[i];
      x.set(i, original + kStep);
      const double up = eval();
      x.set(i, original - kStep);
      const double down = eval();
      x.set(i, original);
      const double numeric = (up - down) / (2.0 * kStep);
      const double a = analytic[k][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), floor));
      ++coordinates;
    }
  }
  return worst;
}

// ---- ops ------------------------------------------------------------------

std::vector<Check> op_checks() {
  std::vector<Check> c;
  auto unary = [&](std::string name, std::function<Tensor(const Tensor&)> op, double lo,
                   double hi, bool signed_values) {
    c.push_back({std::move(name), [op, lo, hi, signed_values](std::mt19937_64& rng) {
                   Tensor x = signed_values ? away_from_zero(rng, {3, 4}, lo, hi)
                                            : leaf(rng, {3, 4}, lo, hi);
                   return probed(rng, {x}, [op, x] { return op(x); });
                 }});
  };
  auto binary = [&](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> op,
                    Shape a, Shape b) {
    c.push_back({std::move(name), [op, a, b](std::mt19937_64& rng) {
                   Tensor x = leaf(rng, a), y = away_from_zero(rng, b, 0.5, 1.5);
                   return probed(rng, {x, y}, [op, x, y] { return op(x, y); });
                 }});
  };
  binary("add", [](const Tensor& a, const Tensor& b) { return add(a, b); }, {3, 4}, {3, 4});
  binary("add_broadcast", [](const Tensor& a, const Tensor& b) { return add(a, b); }, {2, 3, 4}, {1, 4});
  binary("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); }, {3, 4}, {3, 1});
  binary("mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); }, {3, 4}, {3, 4});
  binary("mul_broadcast", [](const Tensor& a, const Tensor& b) { return mul(a, b); }, {2, 3, 4}, {3, 1});
  binary("div", [](const Tensor& a, const Tensor& b) { return div(a, b); }, {3, 4}, {3, 4});
  unary("add_scalar", [](const Tensor& x) { return add(x, 0.7); }, -1, 1, false);
  unary("mul_scalar", [](const Tensor& x) { return mul(x, -1.3); }, -1, 1, false);
  unary("neg", [](const Tensor& x) { return neg(x); }, -1, 1, false);
  unary("exp", [](const Tensor& x) { return exp(x); }, -1, 1, false);
  unary("log", [](const Tensor& x) { return log(x); }, 0.2, 2, false);
  unary("pow", [](const Tensor& x) { return pow(x, 2.5); }, 0.2, 2, false);
  unary("square", [](const Tensor& x) { return square(x); }, -1, 1, false);
  unary("relu", [](const Tensor& x) { return relu(x); }, 0.05, 1, true);
  unary("tanh", [](const Tensor& x) { return tanh(x); }, -2, 2, false);
  unary("sigmoid", [](const Tensor& x) { return sigmoid(x); }, -3, 3, false);
  unary("transpose", [](const Tensor& x) { return transpose(x); }, -1, 1, false);
  unary("reshape", [](const Tensor& x) { return reshape(x, {2, 6}); }, -1, 1, false);
  unary("slice", [](const Tensor& x) { return slice(x, 1, 1, 2); }, -1, 1, false);
  unary("index_select", [](const Tensor& x) { return index_select(x, 0, {2, 0, 2, 1}); }, -1, 1, false);
  unary("softmax", [](const Tensor& x) { return softmax(x, 1); }, -2, 2, false);
  unary("softmax_axis0", [](const Tensor& x) { return softmax(x, 0); }, -2, 2, false);
  unary("sum", [](const Tensor& x) { return sum(x); }, -1, 1, false);
  unary("sum_axis", [](const Tensor& x) { return sum(x, 0); }, -1, 1, false);
  unary("sum_keepdim", [](const Tensor& x) { return sum(x, 1, true); }, -1, 1, false);
  unary("mean", [](const Tensor& x) { return mean(x); }, -1, 1, false);
  unary("mean_axis", [](const Tensor& x) { return mean(x, 1); }, -1, 1, false);
  c.push_back({"max", [](std::mt19937_64& rng) {
                 std::vector<double> v(12);
                 for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(i);
                 std::shuffle(v.begin(), v.end(), rng);
                 Tensor x = Tensor::leaf({3, 4}, v);
                 return probed(rng, {x}, [x] { return max(x); });
               }});
  c.push_back({"max_axis", [](std::mt19937_64& rng) {
                 std::vector<double> v(12);
                 for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(i);
                 std::shuffle(v.begin(), v.end(), rng);
                 Tensor x = Tensor::leaf({3, 4}, v);
                 return probed(rng, {x}, [x] { return max(x, 1); });
               }});
  c.push_back({"matmul", [](std::mt19937_64& rng) {
                 Tensor a = leaf(rng, {3, 4}), b = leaf(rng, {4, 2});
                 return probed(rng, {a, b}, [a, b] { return matmul(a, b); });
               }});
  c.push_back({"matmul_batched", [](std::mt19937_64& rng) {
                 Tensor a = leaf(rng, {2, 3, 4}), b = leaf(rng, {2, 4, 5});
                 return probed(rng, {a, b}, [a, b] { return matmul(a, b); });
               }});
  c.push_back({"matmul_shared", [](std::mt19937_64& rng) {
                 Tensor a = leaf(rng, {2, 3, 4}), b = leaf(rng, {4, 2});
                 return probed(rng, {a, b}, [a, b] { return matmul(a, b); });
               }});
  c.push_back({"permute", [](std::mt19937_64& rng) {
                 Tensor x = leaf(rng, {2, 3, 4});
                 return probed(rng, {x}, [x] { return permute(x, {2, 0, 1}); });
               }});
  c.push_back({"concat", [](std::mt19937_64& rng) {
                 Tensor a = leaf(rng, {2, 3}), b = leaf(rng, {2, 2});
                 return probed(rng, {a, b}, [a, b] { return concat({a, b, a}, 1); });
               }});
  c.push_back({"stack", [](std::mt19937_64& rng) {
                 Tensor a = leaf(rng, {2, 3}), b = leaf(rng, {2, 3});
                 return probed(rng, {a, b}, [a, b] { return stack({a, b}, 1); });
               }});
  return c;
}

// ---- layers, modules and losses --------------------------------------------

ModelConfig tiny_model() {
  ModelConfig m;
  m.grid_height = 3;
  m.grid_width = 4;
  m.channels = 3;
  m.dim = 4;
  m.query_dim = 4;
  m.heads = 2;
  m.ffn_dim = 6;
  m.discriminator_hidden = 3;
  return m;
}

template <typename Layer, typename... Args>
std::shared_ptr<Layer> make_layer(const std::shared_ptr<nn::ParameterStore>& store, Args&&... args) {
  return std::make_shared<Layer>(*store, std::forward<Args>(args)...);
}

std::shared_ptr<nn::ParameterStore> new_store(std::mt19937_64& rng) {
  return std::make_shared<nn::ParameterStore>(rng());
}

const hand::KinematicTemplate& shared_template() {
  static const hand::KinematicTemplate tmpl = hand::template_from_seed(42);
  return tmpl;
}

hand::HandMesh constant_mesh(const hand::HandMesh& m) {
  return {m.joints.detach(), m.vertices.defined() ? m.vertices.detach() : Tensor()};
}

std::vector<Check> layer_checks() {
  std::vector<Check> c;
  c.push_back({"linear", [](std::mt19937_64& rng) {
                 auto store = new_store(rng);
                 auto layer = make_layer<nn::Linear>(store, "l", 4, 3);
                 Tensor x = leaf(rng, {5, 4});
                 return probed(rng, with_parameters({x}, *store), [store, layer, x] { return (*layer)(x); });
               }});
  c.push_back({"layer_norm", [](std::mt19937_64& rng) {
                 auto store = new_store(rng);
                 auto layer = make_layer<nn::LayerNorm>(store, "n", 5);
                 Tensor x = leaf(rng, {3, 5}, -2, 2);
                 return probed(rng, with_parameters({x}, *store), [store, layer, x] { return (*layer)(x); });
               }});
  c.push_back({"feed_forward", [](std::mt19937_64& rng) {
                 auto store = new_store(rng);
                 auto layer = make_layer<nn::FeedForward>(store, "f", 4, 6);
                 Tensor x = leaf(rng, {3, 4});
                 return probed(rng, with_parameters({x}, *store), [store, layer, x] { return (*layer)(x); });
               }});
  c.push_back({"multi_head_attention", [](std::mt19937_64& rng) {
                 auto store = new_store(rng);
                 auto layer = make_layer<nn::MultiHeadAttention>(store, "a", 4, 2);
                 Tensor q = leaf(rng, {2, 4}), kv = leaf(rng, {5, 4});
                 return probed(rng, with_parameters({q, kv}, *store),
                               [store, layer, q, kv] { return (*layer)(q, kv, kv); });
               }});
  c.push_back({"encoder_layer", [](std::mt19937_64& rng) {
                 auto store = new_store(rng);
                 auto layer = make_layer<nn::EncoderLayer>(store, "e", 4, 2, 6);
                 Tensor x = leaf(rng, {5, 4});
                 return probed(rng, with_parameters({x}, *store), [store, layer, x] { return (*layer)(x); });
               }});
  c.push_back({"decoder_layer", [](std::mt19937_64& rng) {
                 auto store = new_store(rng);
                 auto layer = make_layer<nn::DecoderLayer>(store, "d", 4, 2, 6);
                 Tensor q = leaf(rng, {1, 4}), mem = leaf(rng, {5, 4});
                 return probed(rng, with_parameters({q, mem}, *store),
                               [store, layer, q, mem] { return (*layer)(q, mem); });
               }});
  c.push_back({"gru", [](std::mt19937_64& rng) {
                 auto store = new_store(rng);
                 auto layer = make_layer<nn::GruLayer>(store, "g", 3, 4);
                 Tensor x = leaf(rng, {5, 3});
                 return probed(rng, with_parameters({x}, *store), [store, layer, x] {
                   return concat({(*layer)(x), (*layer)(x, true)}, 1);
                 });
               }});
  c.push_back({"bigru", [](std::mt19937_64& rng) {
                 auto store = new_store(rng);
                 auto layer = make_layer<nn::BiGruLayer>(store, "b", 3, 2);
                 Tensor x = leaf(rng, {4, 3});
                 return probed(rng, with_parameters({x}, *store), [store, layer, x] { return (*layer)(x); });
               }});
  c.push_back({"positional_embedding", [](std::mt19937_64& rng) {
                 auto store = new_store(rng);
                 auto layer = make_layer<nn::PositionalEmbedding2D>(store, "p", 2, 3, 4,
                                                                    nn::PositionalKind::Learned);
                 Tensor x = leaf(rng, {6, 4});
                 return probed(rng, with_parameters({x}, *store),
                               [store, layer, x] { return mul(add(x, layer->table()), x); });
               }});
  c.push_back({"rodrigues", [](std::mt19937_64& rng) {
                 Tensor aa = leaf(rng, {4, 3}, -1.5, 1.5);
                 return probed(rng, {aa}, [aa] { return hand::rodrigues(aa); });
               }});
  c.push_back({"hand_forward", [](std::mt19937_64& rng) {
                 Tensor theta = leaf(rng, {2, hand::kPoseDim}, -0.6, 0.6);
                 Tensor beta = leaf(rng, {2, hand::kShapeDim}, -1, 1);
                 return probed(rng, {theta, beta}, [theta, beta] {
                   hand::HandMesh m = hand::hand_forward(theta, beta, shared_template(), true);
                   return concat({reshape(m.joints, {2, 63}), reshape(m.vertices, {2, 778 * 3})}, 1);
                 });
               }});
  c.push_back({"project_2d", [](std::mt19937_64& rng) {
                 hand::Camera cam;
                 cam.fx = 30;
                 cam.fy = 28;
                 cam.cx = 8;
                 cam.cy = 7;
                 cam.translation = {5, -3, 500};
                 Tensor pts = leaf(rng, {6, 3}, -60, 60);
                 return probed(rng, {pts}, [pts, cam] { return hand::project_2d(pts, cam); });
               }});
  c.push_back({"soft_argmax", [](std::mt19937_64& rng) {
                 Tensor logits = leaf(rng, {12, 3}, -2, 2);
                 const Tensor centers = cell_centers(3, 4);
                 return probed(rng, {logits}, [logits, centers] {
                   auto [heat, joints] = soft_argmax(logits, centers);
                   return concat({reshape(heat, {36}), reshape(joints, {6})}, 0);
                 });
               }});
  c.push_back({"spatial_transformer", [](std::mt19937_64& rng) {
                 auto store = new_store(rng);
                 auto net = std::make_shared<SpatialTransformer>(*store, tiny_model());
                 Tensor grid = leaf(rng, {3, 4, 3}, 0, 1);
                 return probed(rng, with_parameters({grid}, *store), [store, net, grid] {
                   SpatialOutput out = (*net)(grid);
                   return concat({reshape(out.latent, {4}), reshape(out.joints2d, {42})}, 0);
                 });
               }});
  c.push_back({"temporal_transformer", [](std::mt19937_64& rng) {
                 auto store = new_store(rng);
                 auto net = std::make_shared<TemporalTransformer>(*store, tiny_model(), 3);
                 Tensor latents = leaf(rng, {3, 4});
                 return probed(rng, with_parameters({latents}, *store), [store, net, latents] {
                   TemporalOutput o = (*net)(latents);
                   return concat({reshape(o.pose, {144}), reshape(o.motion_fw, {144}),
                                  reshape(o.motion_bw, {144}), o.confidence, o.shape,
                                  reshape(o.monocular_pose, {144}),
                                  reshape(o.monocular_shape, {30})},
                                 0);
                 });
               }});
  c.push_back({"motion_discriminator", [](std::mt19937_64& rng) {
                 auto store = new_store(rng);
                 auto net = std::make_shared<MotionDiscriminator>(*store, 6, 3);
                 Tensor poses = leaf(rng, {4, 6});
                 return probed(rng, with_parameters({poses}, *store),
                               [store, net, poses] { return (*net)(poses); });
               }});
  for (auto mode : {AggregationMode::Dynamic, AggregationMode::Average,
                    AggregationMode::WeightedExternal}) {
    c.push_back({"fuse_sequence_" + to_string(mode), [mode](std::mt19937_64& rng) {
                   Tensor p = leaf(rng, {4, 5}), fw = leaf(rng, {4, 5}), bw = leaf(rng, {4, 5});
                   Tensor conf = leaf(rng, {4}, -2, 2);
                   std::optional<std::vector<double>> ext;
                   if (mode == AggregationMode::WeightedExternal) ext = uniform(rng, 4, 0.1, 1.0);
                   return probed(rng, {p, fw, bw, conf}, [=] {
                     return fuse_sequence(p, fw, bw, conf, mode, ext);
                   });
                 }});
  }
  auto point_pair = [&](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> f,
                        Shape s) {
    c.push_back({std::move(name), [f, s](std::mt19937_64& rng) {
                   Tensor pred = leaf(rng, s, -3, 3);
                   Tensor ref = constant(rng, s, -3, 3);
                   return Instance{{pred}, [f, pred, ref] { return f(pred, ref); }};
                 }});
  };
  point_pair("max_mse", [](const Tensor& a, const Tensor& b) { return sum(max_mse(a, b)); }, {2, 6, 3});
  point_pair("point_mse", [](const Tensor& a, const Tensor& b) { return sum(point_mse(a, b)); }, {2, 6, 3});
  point_pair("maxmse_vec", [](const Tensor& a, const Tensor& b) { return sum(maxmse_vec(a, b)); }, {3, 7});
  point_pair("l2d", [](const Tensor& a, const Tensor& b) { return l2d(a, b); }, {2, 21, 2});
  c.push_back({"mesh_loss", [](std::mt19937_64& rng) {
                 Tensor theta = leaf(rng, {2, hand::kPoseDim}, -0.5, 0.5);
                 Tensor beta = leaf(rng, {2, hand::kShapeDim}, -1, 1);
                 const hand::HandMesh gt = constant_mesh(hand::hand_forward(
                     constant(rng, {2, hand::kPoseDim}, -0.5, 0.5), constant(rng, {2, hand::kShapeDim}),
                     shared_template(), true));
                 return Instance{{theta, beta}, [theta, beta, gt] {
                                   return mesh_loss(hand::hand_forward(theta, beta, shared_template(), true), gt);
                                 }};
               }});
  c.push_back({"adversarial", [](std::mt19937_64& rng) {
                 Tensor fake = leaf(rng, {3}, 0.05, 0.95), real = leaf(rng, {3}, 0.05, 0.95);
                 return Instance{{fake, real}, [fake, real] {
                                   return add(adv_generator_loss(fake), discriminator_loss(fake, real));
                                 }};
               }});
  c.push_back({"monocular_loss", [](std::mt19937_64& rng) {
                 Tensor pose = leaf(rng, {2, hand::kPoseDim}, -0.5, 0.5);
                 Tensor shape = leaf(rng, {2, hand::kShapeDim}, -1, 1);
                 const Tensor gt_theta = constant(rng, {2, hand::kPoseDim}, -0.5, 0.5);
                 const Tensor gt_beta = constant(rng, {hand::kShapeDim});
                 const Tensor beta_rows = add(Tensor::zeros({2, hand::kShapeDim}),
                                              reshape(gt_beta, {1, hand::kShapeDim}));
                 const hand::HandMesh gt =
                     constant_mesh(hand::hand_forward(gt_theta, beta_rows, shared_template(), true));
                 return Instance{{pose, shape}, [=] {
                                   return monocular_loss(pose, shape, gt_theta, gt_beta, gt,
                                                         shared_template());
                                 }};
               }});
  c.push_back({"motion_loss", [](std::mt19937_64& rng) {
                 Tensor p = leaf(rng, {4, 6}), fw = leaf(rng, {4, 6}), bw = leaf(rng, {4, 6});
                 const Tensor target = constant(rng, {4, 6});
                 return Instance{{p, fw, bw}, [=] { return motion_loss(p, fw, bw, target); }};
               }});
  c.push_back({"smooth_loss", [](std::mt19937_64& rng) {
                 Tensor x = leaf(rng, {5, 6});
                 return Instance{{x}, [x] { return smooth_loss(x, 0.7, 1.3); }};
               }});
  c.push_back({"total_loss", [](std::mt19937_64& rng) {
                 std::vector<Tensor> xs;
                 for (int i = 0; i < 6; ++i) xs.push_back(leaf(rng, {3}));
                 LossConfig w;
                 w.mesh = 0.5;
                 w.l2d = 2.0;
                 return Instance{xs, [xs, w] {
                                   LossTerms t{sum(square(xs[0])), sum(square(xs[1])), sum(square(xs[2])),
                                               sum(square(xs[3])), sum(square(xs[4])), sum(square(xs[5]))};
                                   return total_loss(t, w).first;
                                 }};
               }});
  return c;
}

// ---- end to end ------------------------------------------------------------

Config tiny_pipeline_config() {
  Config c;
  c.model = tiny_model();
  c.data.seq_len = 3;
  c.data.train_sequences = 1;
  return c;
}

std::vector<Check> end_to_end_checks() {
  std::vector<Check> c;
  auto pipeline = [](bool full_objective) {
    return [full_objective](std::mt19937_64& rng) {
      Config cfg = tiny_pipeline_config();
      cfg.model.init_seed = rng();
      auto model = std::make_shared<DeformerModel>(cfg);
      const auto sample = std::make_shared<synth::SequenceSample>(synth::generate_sequence(
          cfg, model->hand_template(), synth::Split::Train, rng() % 1000));
      const auto target = std::make_shared<train::SequenceTarget>(
          train::make_target(*sample, model->hand_template()));
      Tensor grids = Tensor::leaf(sample->grids.shape(), sample->grids.to_vector());
      std::vector<Tensor> leaves{grids};
      for (const auto& p : model->generator_parameters().parameters()) leaves.push_back(p.value);
      if (full_objective) {
        for (const auto& p : model->discriminator_parameters().parameters()) leaves.push_back(p.value);
      }
      return Instance{leaves, [=] {
                        synth::SequenceSample s = *sample;
                        s.grids = grids;
                        if (full_objective) return train::generator_losses(*model, s, *target).total;
                        GeneratorOutput out = model->forward(grids, AggregationMode::Dynamic);
                        return mesh_loss(out.mesh, target->mesh);
                      }};
    };
  };
  c.push_back({"grid_to_mesh_loss", pipeline(false)});
  c.push_back({"grid_to_hand_loss", pipeline(true)});
  return c;
}

std::vector<Check> checks(Scope scope) {
  switch (scope) {
    case Scope::Ops: return op_checks();
    case Scope::Layers: return layer_checks();
    case Scope::EndToEnd: return end_to_end_checks();
  }
  return {};
}

std::uint64_t name_key(const std::string& name) { return hash_text(name); }

CheckResult run_check(const Check& check, std::uint64_t seed) {
  CheckResult r;
  r.name = check.name;
  auto rng = make_rng(seed, {name_key(check.name)});
  Instance inst = check.build(rng);
  r.max_rel_error = max_error(inst, r.coordinates);
  r.passed = r.max_rel_error < kTolerance;
  return r;
}

}  // namespace

std::string to_string(Scope scope) {
  switch (scope) {
    case Scope::Ops: return "ops";
    case Scope::Layers: return "layers";
    case Scope::EndToEnd: return "end2end";
  }
  return "?";
}

Scope parse_scope(const std::string& name) {
  if (name == "ops") return Scope::Ops;
  if (name == "layers") return Scope::Layers;
  if (name == "end2end") return Scope::EndToEnd;
  throw ConfigError("unknown gradcheck scope '" + name + "' (expected ops, layers or end2end)");
}

std::vector<std::string> check_names(Scope scope) {
  std::vector<std::string> out;
  for (const auto& c : checks(scope)) out.push_back(c.name);
  return out;
}

std::vector<CheckResult> run(Scope scope, std::uint64_t seed) {
  std::vector<CheckResult> out;
  for (const auto& c : checks(scope)) out.push_back(run_check(c, seed));
  return out;
}

CheckResult run_one(Scope scope, const std::string& name, std::uint64_t seed) {
  for (const auto& c : checks(scope)) {
    if (c.name == name) return run_check(c, seed);
  }
  throw ConfigError("unknown gradcheck '" + name + "' in scope " + to_string(scope));
}

}  // namespace deformer::gradcheck
