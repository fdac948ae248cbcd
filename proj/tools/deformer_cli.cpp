// deformer: dataset generation, training, evaluation, gradient checks and
// ablation grids.
//
// Exit codes: 0 ok, 2 configuration/usage, 3 I/O, 4 numeric failure,
// 5 incompatible checkpoint or dataset, 6 gradient check failure.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "deformer/config.hpp"
#include "deformer/error.hpp"
#include "deformer/gradcheck.hpp"
#include "deformer/metrics.hpp"
#include "deformer/synthdata.hpp"
#include "deformer/training.hpp"

namespace fs = std::filesystem;
using namespace deformer;

namespace {

enum Exit { kOk = 0, kConfig = 2, kIo = 3, kNumeric = 4, kCompat = 5, kGradcheck = 6 };

struct ConfigArgs {
  std::string path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args, bool training) {
  cmd->add_option("--config", args.path, "Configuration file (key = value lines)");
  cmd->add_option("--preset", args.preset, "desk | paper (overrides the file's preset line)")
      ->check(CLI::IsMember({"desk", "paper"}));
  if (training) {
    cmd->add_option("--seed", args.seed, "Training seed (overrides train.seed)");
    cmd->add_option("--epochs", args.epochs, "Epoch count (overrides train.epochs)");
  }
}

Config resolve_config(const ConfigArgs& args) {
  std::string text;
  if (!args.path.empty()) {
    std::ifstream in(args.path);
    if (!in) throw IoError("cannot read config " + args.path);
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  if (!args.preset.empty()) text += "\npreset = " + args.preset + "\n";
  Config c = parse_config(text);
  if (args.seed) c.train.seed = *args.seed;
  if (args.epochs) c.train.epochs = *args.epochs;
  c.validate();
  return c;
}

std::size_t resolve_threads(std::size_t flag) {
  if (flag != 0) return flag;
  if (const char* env = std::getenv("DEFORMER_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("DEFORMER_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void print_manifest(const synth::DatasetManifest& m) {
  std::printf("dataset  seed %llu  template %llu  T=%zu  stride %zu  grid %zux%zux%zu\n",
              static_cast<unsigned long long>(m.seed),
              static_cast<unsigned long long>(m.template_seed), m.seq_len, m.stride, m.grid[0],
              m.grid[1], m.grid[2]);
  std::printf("train    %zu sequences  %zu frames  (%s)\n", m.train.sequences, m.train.frames,
              m.train.file.c_str());
  std::printf("test     %zu sequences  %zu frames  (%s)\n", m.test.sequences, m.test.frames,
              m.test.file.c_str());
  const auto b = m.buckets();
  std::printf("occlusion buckets  0-25: %zu  25-50: %zu  50-75: %zu  75-100: %zu\n", b[0], b[1],
              b[2], b[3]);
  std::printf("data hash %s  interface hash %s\n", m.data_hash.c_str(), m.interface_hash.c_str());
}

void print_eval(const metrics::EvalReport& r) {
  std::printf("%-18s mpjpe %.3f mm  root-aligned %.3f mm  auc %.4f  F@5 %.4f  F@15 %.4f  accel %.2f mm/s^2\n",
              r.mode.c_str(), r.overall.mpjpe_mm, r.overall.root_aligned_mpjpe_mm, r.overall.auc,
              r.overall.f_at_5, r.overall.f_at_15, r.overall.accel_error_mm_s2);
}

// ---- subcommands ----------------------------------------------------------

int generate_data(const ConfigArgs& cargs, const std::string& out) {
  const Config c = resolve_config(cargs);
  const auto manifest = synth::generate_dataset(c, out);
  print_manifest(manifest);
  return kOk;
}

train::FitOptions progress_options(const std::string& out, std::size_t total_steps) {
  train::FitOptions opt;
  opt.out_dir = out;
  opt.on_step = [total_steps](std::size_t step, const LossReport& r) {
    if (step == 1 || step % 50 == 0 || step == total_steps) {
      std::printf("step %6zu/%zu  total %.4g  mesh %.4g  adv %.3g  l2d %.4g  mono %.4g  motion %.3g  smooth %.3g  disc %.3g\n",
                  step, total_steps, r.total, r.mesh, r.adv, r.l2d, r.monocular, r.motion,
                  r.smooth, r.disc);
      std::fflush(stdout);
    }
  };
  return opt;
}

std::size_t steps_per_epoch(const Config& c, std::size_t sequences) {
  return (sequences + c.train.batch_size - 1) / c.train.batch_size;
}

int train_cmd(const ConfigArgs& cargs, const std::string& data, const std::string& out,
              const std::string& resume, std::size_t threads) {
  const Config c = resolve_config(cargs);
  const auto manifest = synth::read_manifest(data);
  synth::check_compatible(manifest, c);
  const auto dataset = synth::load_dataset(data);
  ensure_dir(out);
  write_text(fs::path(out) / "config.txt", config_to_text(c));

  train::Trainer trainer(c, dataset.train);
  trainer.set_threads(threads);
  if (!resume.empty()) trainer.resume(resume);
  const std::size_t total = steps_per_epoch(c, dataset.train.size()) * c.train.epochs;
  std::printf("training %s preset: %zu epochs, %zu steps, seed %llu\n", c.preset.c_str(),
              c.train.epochs, total, static_cast<unsigned long long>(c.train.seed));
  try {
    trainer.fit(progress_options(out, total));
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure at step %zu: %s\n", trainer.global_step() + 1, e.what());
    if (!trainer.history().empty()) {
      train::write_loss_log((fs::path(out) / "train_log.csv").string(), trainer.history());
    }
    return kNumeric;
  }
  std::printf("checkpoint %s\n", (fs::path(out) / "checkpoint.dfrm").string().c_str());
  return kOk;
}

void write_report(const metrics::EvalReport& r, const fs::path& dir) {
  write_text(dir / ("eval_" + r.mode + ".json"), r.to_json());
  write_text(dir / ("eval_" + r.mode + ".csv"),
             metrics::EvalReport::csv_header() + "\n" + r.csv_row() + "\n");
  write_text(dir / ("per_joint_" + r.mode + ".csv"),
             metrics::EvalReport::per_joint_csv_header() + "\n" + r.per_joint_csv_row() + "\n");
}

int evaluate_cmd(const std::string& checkpoint, const std::string& data, const std::string& mode,
                 const std::string& out) {
  std::unique_ptr<DeformerModel> model;
  try {
    model = train::load_model(checkpoint);
  } catch (const IoError& e) {
    throw CompatibilityError(e.what());
  }
  const auto manifest = synth::read_manifest(data);
  if (manifest.interface_hash != hex64(interface_hash(model->config()))) {
    throw CompatibilityError("checkpoint " + checkpoint + " expects interface " +
                             hex64(interface_hash(model->config())) + " but " + data + " has " +
                             manifest.interface_hash);
  }
  const auto dataset = synth::load_dataset(data);
  const auto report = metrics::evaluate(*model, dataset.test, parse_aggregation(mode));
  ensure_dir(out);
  write_report(report, out);
  print_eval(report);
  return kOk;
}

int gradcheck_cmd(const std::string& scope_name, std::uint64_t seed) {
  const auto scope = gradcheck::parse_scope(scope_name);
  const auto results = gradcheck::run(scope, seed);
  bool ok = true;
  std::printf("%-32s %12s %8s  %s\n", "check", "max rel err", "coords", "result");
  for (const auto& r : results) {
    std::printf("%-32s %12.3e %8zu  %s\n", r.name.c_str(), r.max_rel_error, r.coordinates,
                r.passed ? "pass" : "FAIL");
    ok = ok && r.passed;
  }
  std::printf("%zu checks, tolerance %.0e: %s\n", results.size(), gradcheck::kTolerance,
              ok ? "all passed" : "FAILURES");
  return ok ? kOk : kGradcheck;
}

int ablate_cmd(const ConfigArgs& cargs, const std::string& grid, const std::string& data,
               const std::string& out, std::size_t threads) {
  const Config base = resolve_config(cargs);
  const auto manifest = synth::read_manifest(data);
  synth::check_compatible(manifest, base);
  const auto dataset = synth::load_dataset(data);
  ensure_dir(out);
  const std::string seeds = "train_seed=" + std::to_string(base.train.seed) +
                            " init_seed=" + std::to_string(base.model.init_seed) +
                            " data_hash=" + manifest.data_hash;


  if (grid == "fusion") {
    const fs::path dir = fs::path(out) / "fusion";
    train::Trainer trainer(base, dataset.train);
    trainer.set_threads(threads);
    trainer.fit(progress_options(dir.string(), steps_per_epoch(base, dataset.train.size()) * base.train.epochs));
    std::string csv = "# " + seeds + "\nmode,mpjpe_mm,root_aligned_mpjpe_mm,auc,accel_error_mm_s2,heavy_occlusion_mpjpe_mm\n";
    for (auto mode : {AggregationMode::Center, AggregationMode::Average,
                      AggregationMode::WeightedExternal, AggregationMode::Dynamic}) {
      const auto r = metrics::evaluate(trainer.model(), dataset.test, mode);
      write_report(r, dir);
      print_eval(r);
      char row[512];
      const double heavy = r.buckets[3] ? r.buckets[3]->mpjpe_mm : std::nan("");
      std::snprintf(row, sizeof row, "%s,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.mode.c_str(),
                    r.overall.mpjpe_mm, r.overall.root_aligned_mpjpe_mm, r.overall.auc,
                    r.overall.accel_error_mm_s2, heavy);
      csv += row;
    }
    write_text(fs::path(out) / "fusion_ablation.csv", csv);
    return kOk;
  }

  std::string csv = "# " + seeds + "\nmax_mse,discriminator,mpjpe_mm,joint_balance_std_mm,accel_error_mm_s2\n";
  for (bool max_mse : {true, false}) {
    for (bool disc : {true, false}) {
      Config c = base;
      c.loss.max_mse = max_mse;
      c.train.discriminator = disc;
      const std::string name = std::string("loss_maxmse-") + (max_mse ? "on" : "off") + "_disc-" +
                               (disc ? "on" : "off");
      std::printf("== %s\n", name.c_str());
      const fs::path dir = fs::path(out) / name;
      train::Trainer trainer(c, dataset.train);
      trainer.set_threads(threads);
      trainer.fit(progress_options(dir.string(), steps_per_epoch(c, dataset.train.size()) * c.train.epochs));
      const auto r = metrics::evaluate(trainer.model(), dataset.test, c.train.aggregation);
      write_report(r, dir);
      print_eval(r);
      char row[256];
      std::snprintf(row, sizeof row, "%s,%s,%.6f,%.6f,%.6f\n", max_mse ? "on" : "off",
                    disc ? "on" : "off", r.overall.mpjpe_mm, r.joint_balance_std,
                    r.overall.accel_error_mm_s2);
      csv += row;
    }
  }
  write_text(fs::path(out) / "loss_ablation.csv", csv);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deformer hand-pose toolkit"};
  app.require_subcommand(1, 1);
  std::size_t threads_flag = 0;
  app.add_option("--threads", threads_flag, "Worker threads (default: DEFORMER_THREADS or 1)");

  ConfigArgs gen_cfg, train_cfg, ablate_cfg;
  std::string gen_out, train_data, train_out, resume, eval_ckpt, eval_data, eval_mode = "dynamic",
                                                                  eval_out = ".", scope, grid,
                                                                  ablate_data, ablate_out;
  std::uint64_t gradcheck_seed = 1;

  auto* gen = app.add_subcommand("generate-data", "Write the synthetic benchmark");
  add_config_options(gen, gen_cfg, false);
  gen->add_option("--out", gen_out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a model on a generated dataset");
  add_config_options(tr, train_cfg, true);
  tr->add_option("--data", train_data, "Dataset directory")->required();
  tr->add_option("--out", train_out, "Run directory")->required();
  tr->add_option("--resume", resume, "Checkpoint to continue from");

  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on the test split");
  ev->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  ev->add_option("--data", eval_data, "Dataset directory")->required();
  ev->add_option("--mode", eval_mode, "center | average | weighted-occlusion | dynamic")
      ->check(CLI::IsMember({"center", "average", "weighted-occlusion", "dynamic"}));
  ev->add_option("--out", eval_out, "Report directory");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_option("--scope", scope, "ops | layers | end2end")
      ->required()
      ->check(CLI::IsMember({"ops", "layers", "end2end"}));
  gc->add_option("--seed", gradcheck_seed, "Instance seed");

  auto* ab = app.add_subcommand("ablate", "Train and compare ablation grids");
  add_config_options(ab, ablate_cfg, true);
  ab->add_option("--grid", grid, "fusion | loss")->required()->check(CLI::IsMember({"fusion", "loss"}));
  ab->add_option("--data", ablate_data, "Dataset directory")->required();
  ab->add_option("--out", ablate_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    const std::size_t threads = resolve_threads(threads_flag);
    if (*gen) return generate_data(gen_cfg, gen_out);
    if (*tr) return train_cmd(train_cfg, train_data, train_out, resume, threads);
    if (*ev) return evaluate_cmd(eval_ckpt, eval_data, eval_mode, eval_out);
    if (*gc) return gradcheck_cmd(scope, gradcheck_seed);
    if (*ab) return ablate_cmd(ablate_cfg, grid, ablate_data, ablate_out, threads);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumeric;
  } catch (const CompatibilityError& e) {
    std::fprintf(stderr, "incompatible: %s\n", e.what());
    return kCompat;
  }
  return kConfig;
}
