#pragma once

// Adversarial training loop: Adam for both networks, step-decayed learning
// rates, gradient clipping, per-epoch checkpoints and a CSV loss log.
//
// Checkpoint layout (little endian): "DFRM", u32 version, u64 config hash,
// u64 epoch, u64 step, u32 + config text, u32 blob count, then per blob
// u32 + name, u32 ndim, u64 dims..., f64 values.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "deformer/losses.hpp"
#include "deformer/model.hpp"
#include "deformer/synthdata.hpp"

namespace deformer::train {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// base * decay^floor(epoch / every)
double learning_rate(double base, double decay, std::size_t every, std::size_t epoch);

using Gradients = std::vector<std::vector<double>>;

// Scales `grads` in place so their joint L2 norm is at most `max_norm`
// (0 disables). Returns the norm before clipping.
double clip_gradients(Gradients& grads, double max_norm);

class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  // One bias-corrected update. `grads` is aligned with the parameter list.
  void step(const Gradients& grads, double lr);

  std::uint64_t steps() const { return steps_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(std::uint64_t steps, std::vector<std::vector<double>> m,
               std::vector<std::vector<double>> v);

 private:
  std::vector<Tensor> params_;
  double beta1_, beta2_, eps_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// Ground truth a sequence is scored against.
struct SequenceTarget {
  hand::HandMesh mesh;  // [T x 778 x 3], [T x 21 x 3]
  Tensor joints2d;      // [T x 21 x 2]
};
SequenceTarget make_target(const synth::SequenceSample& sample,
                           const hand::KinematicTemplate& tmpl);

// Weights for WeightedExternal fusion: 1 - measured occlusion.
std::vector<double> visibility_weights(const synth::SequenceSample& sample);

struct GeneratorStep {
  LossTerms terms;
  Tensor total;
  LossReport report;
  Tensor fake;  // what the discriminator sees, [T x 48]
};

// Every generator loss of one sequence. Freeze the discriminator (see
// FreezeGuard) around this and the matching backward pass to keep its
// parameters out of the gradient.
GeneratorStep generator_losses(DeformerModel& model, const synth::SequenceSample& sample,
                               const SequenceTarget& target);

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t config_hash = 0;
  Config config;
  std::uint64_t epoch = 0;  // completed epochs
  std::uint64_t step = 0;   // completed steps
  std::map<std::string, Tensor> blobs;
};

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint);
// Throws IoError on a missing, truncated or foreign file and
// CompatibilityError on an unknown version.
Checkpoint read_checkpoint(const std::string& path);

// Rebuilds the model stored in a checkpoint.
std::unique_ptr<DeformerModel> load_model(const std::string& path);

struct FitOptions {
  std::string out_dir;         // checkpoint.dfrm and train_log.csv; empty writes nothing
  std::size_t max_steps = 0;   // stop after this many global steps; 0 = no limit
  std::size_t max_epochs = 0;  // stop after this many epochs this call; 0 = no limit
  std::function<void(std::size_t step, const LossReport&)> on_step;
};

class Trainer {
 public:
  // `train_set` must outlive the trainer.
  Trainer(const Config& config, const std::vector<synth::SequenceSample>& train_set);

  // Generator update on every loss, then a discriminator update on the
  // detached generated sequences against fresh real trajectories.
  LossReport train_step(const std::vector<std::size_t>& batch);

  // Shuffled batch order of an epoch; the last batch may be short.
  std::vector<std::vector<std::size_t>> epoch_batches(std::size_t epoch) const;

  // Trains up to config.train.epochs, checkpointing after each epoch.
  void fit(const FitOptions& options = {});

  Checkpoint checkpoint() const;
  void save_checkpoint(const std::string& path) const;
  // Throws CompatibilityError when the checkpoint was made with another
  // configuration.
  void resume(const std::string& path);

  // Sequences trained concurrently within a batch; results do not depend on it.
  void set_threads(std::size_t threads) { threads_ = threads == 0 ? 1 : threads; }

  DeformerModel& model() { return *model_; }
  const Config& config() const { return config_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t global_step() const { return step_; }
  const std::vector<LossReport>& history() const { return history_; }

 private:
  Config config_;
  const std::vector<synth::SequenceSample>& data_;
  std::unique_ptr<DeformerModel> model_;
  std::vector<SequenceTarget> targets_;
  std::vector<Tensor> generator_params_;
  std::vector<Tensor> discriminator_params_;
  Adam generator_opt_;
  Adam discriminator_opt_;
  std::size_t epoch_ = 0;
  std::size_t step_ = 0;
  std::size_t threads_ = 1;
  std::vector<LossReport> history_;
};

void write_loss_log(const std::string& path, const std::vector<LossReport>& history);

}  // namespace deformer::train
