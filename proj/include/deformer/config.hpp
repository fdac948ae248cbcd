#pragma once

// Run configuration. Text form is one `key = value` per line with dotted
// section prefixes (model., data., loss., train.); `#` starts a comment.
// Unknown keys are errors. A `preset = desk|paper` line selects the
// defaults the remaining keys override, wherever it appears.

#include <cstdint>
#include <string>

#include "deformer/nn.hpp"

namespace deformer {

enum class AggregationMode { Center, Average, WeightedExternal, Dynamic };

// center | average | weighted-occlusion | dynamic
std::string to_string(AggregationMode mode);
AggregationMode parse_aggregation(const std::string& name);

struct ModelConfig {
  std::size_t grid_height = 16;
  std::size_t grid_width = 16;
  std::size_t channels = 32;
  std::size_t dim = 64;
  std::size_t heads = 2;
  std::size_t ffn_dim = 128;
  std::size_t query_dim = 64;
  std::size_t spatial_encoder_layers = 1;
  std::size_t spatial_decoder_layers = 1;
  std::size_t temporal_encoder_layers = 1;
  std::size_t temporal_decoder_layers = 1;
  bool positional_embeddings = true;
  nn::PositionalKind positional_kind = nn::PositionalKind::Learned;
  bool temporal_embeddings = true;
  std::size_t discriminator_hidden = 64;
  std::uint64_t init_seed = 7;
};

struct DataConfig {
  std::size_t train_sequences = 400;
  std::size_t test_sequences = 100;
  std::size_t seq_len = 7;
  std::size_t stride = 10;
  std::uint64_t seed = 2024;
  std::uint64_t template_seed = 42;
  double blob_sigma = 1.2;      // cells
  double noise = 0.05;
  double blur_probability = 0.2;
  double heavy_occlusion = 0.6;  // target fraction for the forced heavy frame
  double depth_min_mm = 420.0;
  double depth_max_mm = 560.0;
};

enum class MotionTarget { GroundTruth, Prediction };
enum class DiscriminatorInput { Fused, PreFusion };

struct LossConfig {
  double mesh = 1.0;
  double adv = 1.0;
  double l2d = 1.0;
  double monocular = 1.0;
  double motion = 1.0;
  double smooth_first = 1.0;
  double smooth_second = 1.0;
  bool max_mse = true;  // false: plain mean squared error everywhere
  MotionTarget motion_target = MotionTarget::GroundTruth;
};

struct TrainConfig {
  std::size_t epochs = 15;
  double lr_generator = 5e-4;
  double lr_discriminator = 1e-3;
  double lr_decay = 0.7;
  std::size_t lr_decay_every = 10;
  std::size_t batch_size = 4;
  std::uint64_t seed = 1;
  double grad_clip = 10.0;  // global norm; 0 disables
  bool smoothness = true;
  bool discriminator = true;
  DiscriminatorInput discriminator_input = DiscriminatorInput::Fused;
  AggregationMode aggregation = AggregationMode::Dynamic;
  double fps = 30.0;
};

struct Config {
  std::string preset = "desk";
  ModelConfig model;
  DataConfig data;
  LossConfig loss;
  TrainConfig train;

  // Seconds between consecutive sampled frames.
  double frame_interval() const { return static_cast<double>(data.stride) / train.fps; }
  // Throws ConfigError describing the first inconsistent field.
  void validate() const;
};

Config desk_preset();
Config paper_preset();
Config preset_by_name(const std::string& name);

// Throws ConfigError with the offending line number and key.
Config parse_config(const std::string& text);
Config load_config(const std::string& path);
// Canonical text: every key, fixed order, round-trips through parse_config.
std::string config_to_text(const Config& config);

// FNV-1a over canonical text.
std::uint64_t hash_text(const std::string& text);
// Everything that shapes the generated data.
std::uint64_t data_hash(const Config& config);
// What a trained model needs from data: grid geometry, sequence geometry and
// the hand template.
std::uint64_t interface_hash(const Config& config);
std::string hex64(std::uint64_t value);

}  // namespace deformer
