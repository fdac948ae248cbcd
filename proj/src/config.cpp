#include "deformer/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace deformer {

std::string to_string(AggregationMode mode) {
  switch (mode) {
    case AggregationMode::Center: return "center";
    case AggregationMode::Average: return "average";
    case AggregationMode::WeightedExternal: return "weighted-occlusion";
    case AggregationMode::Dynamic: return "dynamic";
  }
  return "dynamic";
}

AggregationMode parse_aggregation(const std::string& name) {
  if (name == "center") return AggregationMode::Center;
  if (name == "average") return AggregationMode::Average;
  if (name == "weighted-occlusion") return AggregationMode::WeightedExternal;
  if (name == "dynamic") return AggregationMode::Dynamic;
  throw ConfigError("unknown aggregation mode '" + name +
                    "' (expected center|average|weighted-occlusion|dynamic)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + s + "'");
  }
  if (used != s.size()) throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

std::uint64_t parse_unsigned(const std::string& s) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw ConfigError("expected a nonnegative integer, got '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

struct Field {
  const char* key;
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

template <typename T>
Field size_field(const char* key, T Config::*section, std::size_t T::*member) {
  return {key,
          [=](Config& c, const std::string& v) {
            (c.*section).*member = static_cast<std::size_t>(parse_unsigned(v));
          },
          [=](const Config& c) { return std::to_string((c.*section).*member); }};
}

template <typename T>
Field seed_field(const char* key, T Config::*section, std::uint64_t T::*member) {
  return {key, [=](Config& c, const std::string& v) { (c.*section).*member = parse_unsigned(v); },
          [=](const Config& c) { return std::to_string((c.*section).*member); }};
}

template <typename T>
Field real_field(const char* key, T Config::*section, double T::*member) {
  return {key, [=](Config& c, const std::string& v) { (c.*section).*member = parse_double(v); },
          [=](const Config& c) { return format_double((c.*section).*member); }};
}

template <typename T>
Field bool_field(const char* key, T Config::*section, bool T::*member) {
  return {key, [=](Config& c, const std::string& v) { (c.*section).*member = parse_bool(v); },
          [=](const Config& c) { return std::string((c.*section).*member ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
  using C = Config;
  using M = ModelConfig;
  using D = DataConfig;
  using L = LossConfig;
  using T = TrainConfig;
  static const std::vector<Field> all{
      size_field("model.grid_height", &C::model, &M::grid_height),
      size_field("model.grid_width", &C::model, &M::grid_width),
      size_field("model.channels", &C::model, &M::channels),
      size_field("model.dim", &C::model, &M::dim),
      size_field("model.heads", &C::model, &M::heads),
      size_field("model.ffn_dim", &C::model, &M::ffn_dim),
      size_field("model.query_dim", &C::model, &M::query_dim),
      size_field("model.spatial_encoder_layers", &C::model, &M::spatial_encoder_layers),
      size_field("model.spatial_decoder_layers", &C::model, &M::spatial_decoder_layers),
      size_field("model.temporal_encoder_layers", &C::model, &M::temporal_encoder_layers),
      size_field("model.temporal_decoder_layers", &C::model, &M::temporal_decoder_layers),
      bool_field("model.positional_embeddings", &C::model, &M::positional_embeddings),
      {"model.positional_kind",
       [](C& c, const std::string& v) {
         if (v == "learned") {
           c.model.positional_kind = nn::PositionalKind::Learned;
         } else if (v == "sinusoidal") {
           c.model.positional_kind = nn::PositionalKind::Sinusoidal;
         } else {
           throw ConfigError("expected learned or sinusoidal, got '" + v + "'");
         }
       },
       [](const C& c) {
         return std::string(c.model.positional_kind == nn::PositionalKind::Learned ? "learned"
                                                                                   : "sinusoidal");
       }},
      bool_field("model.temporal_embeddings", &C::model, &M::temporal_embeddings),
      size_field("model.discriminator_hidden", &C::model, &M::discriminator_hidden),
      seed_field("model.init_seed", &C::model, &M::init_seed),

      size_field("data.train_sequences", &C::data, &D::train_sequences),
      size_field("data.test_sequences", &C::data, &D::test_sequences),
      size_field("data.seq_len", &C::data, &D::seq_len),
      size_field("data.stride", &C::data, &D::stride),
      seed_field("data.seed", &C::data, &D::seed),
      seed_field("data.template_seed", &C::data, &D::template_seed),
      real_field("data.blob_sigma", &C::data, &D::blob_sigma),
      real_field("data.noise", &C::data, &D::noise),
      real_field("data.blur_probability", &C::data, &D::blur_probability),
      real_field("data.heavy_occlusion", &C::data, &D::heavy_occlusion),
      real_field("data.depth_min_mm", &C::data, &D::depth_min_mm),
      real_field("data.depth_max_mm", &C::data, &D::depth_max_mm),

      real_field("loss.mesh", &C::loss, &L::mesh),
      real_field("loss.adv", &C::loss, &L::adv),
      real_field("loss.l2d", &C::loss, &L::l2d),
      real_field("loss.monocular", &C::loss, &L::monocular),
      real_field("loss.motion", &C::loss, &L::motion),
      real_field("loss.smooth_first", &C::loss, &L::smooth_first),
      real_field("loss.smooth_second", &C::loss, &L::smooth_second),
      bool_field("loss.max_mse", &C::loss, &L::max_mse),
      {"loss.motion_target",
       [](C& c, const std::string& v) {
         if (v == "ground-truth") {
           c.loss.motion_target = MotionTarget::GroundTruth;
         } else if (v == "prediction") {
           c.loss.motion_target = MotionTarget::Prediction;
         } else {
           throw ConfigError("expected ground-truth or prediction, got '" + v + "'");
         }
       },
       [](const C& c) {
         return std::string(c.loss.motion_target == MotionTarget::GroundTruth ? "ground-truth"
                                                                              : "prediction");
       }},

      size_field("train.epochs", &C::train, &T::epochs),
      real_field("train.lr_generator", &C::train, &T::lr_generator),
      real_field("train.lr_discriminator", &C::train, &T::lr_discriminator),
      real_field("train.lr_decay", &C::train, &T::lr_decay),
      size_field("train.lr_decay_every", &C::train, &T::lr_decay_every),
      size_field("train.batch_size", &C::train, &T::batch_size),
      seed_field("train.seed", &C::train, &T::seed),
      real_field("train.grad_clip", &C::train, &T::grad_clip),
      bool_field("train.smoothness", &C::train, &T::smoothness),
      bool_field("train.discriminator", &C::train, &T::discriminator),
      {"train.discriminator_input",
       [](C& c, const std::string& v) {
         if (v == "fused") {
           c.train.discriminator_input = DiscriminatorInput::Fused;
         } else if (v == "pre-fusion") {
           c.train.discriminator_input = DiscriminatorInput::PreFusion;
         } else {
           throw ConfigError("expected fused or pre-fusion, got '" + v + "'");
         }
       },
       [](const C& c) {
         return std::string(c.train.discriminator_input == DiscriminatorInput::Fused ? "fused"
                                                                                     : "pre-fusion");
       }},
      {"train.aggregation",
       [](C& c, const std::string& v) { c.train.aggregation = parse_aggregation(v); },
       [](const C& c) { return to_string(c.train.aggregation); }},
      real_field("train.fps", &C::train, &T::fps),
  };
  return all;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void Config::validate() const {
  require(model.grid_height > 0 && model.grid_width > 0, "model grid must be nonempty");
  require(model.channels > 0, "model.channels must be positive");
  require(model.dim > 0 && model.heads > 0, "model.dim and model.heads must be positive");
  require(model.dim % model.heads == 0, "model.dim must be divisible by model.heads");
  require(model.query_dim == model.dim, "model.query_dim must equal model.dim");
  require(model.ffn_dim > 0, "model.ffn_dim must be positive");
  require(model.discriminator_hidden > 0, "model.discriminator_hidden must be positive");
  require(!model.positional_embeddings || model.positional_kind == nn::PositionalKind::Learned ||
              model.dim % 2 == 0,
          "sinusoidal positional embeddings need an even model.dim");
  require(data.seq_len > 0, "data.seq_len must be positive");
  require(data.stride > 0, "data.stride must be positive");
  require(data.blob_sigma > 0.0, "data.blob_sigma must be positive");
  require(data.noise >= 0.0 && data.noise < 1.0, "data.noise must lie in [0, 1)");
  require(data.blur_probability >= 0.0 && data.blur_probability <= 1.0,
          "data.blur_probability must lie in [0, 1]");
  require(data.heavy_occlusion >= 0.0 && data.heavy_occlusion <= 1.0,
          "data.heavy_occlusion must lie in [0, 1]");
  require(data.depth_min_mm > 0.0 && data.depth_max_mm >= data.depth_min_mm,
          "data depth range must be positive and ordered");
  for (double w : {loss.mesh, loss.adv, loss.l2d, loss.monocular, loss.motion, loss.smooth_first,
                   loss.smooth_second}) {
    require(w >= 0.0, "loss weights must be nonnegative");
  }
  require(train.lr_generator > 0.0 && train.lr_discriminator > 0.0,
          "learning rates must be positive");
  require(train.lr_decay > 0.0 && train.lr_decay <= 1.0, "train.lr_decay must lie in (0, 1]");
  require(train.lr_decay_every > 0, "train.lr_decay_every must be positive");
  require(train.batch_size > 0, "train.batch_size must be positive");
  require(train.grad_clip >= 0.0, "train.grad_clip must be nonnegative");
  require(train.fps > 0.0, "train.fps must be positive");
}

Config desk_preset() {
  Config c;
  c.loss.smooth_second = 3000.0;
  return c;
}

Config paper_preset() {
  Config c;
  c.preset = "paper";
  c.model.grid_height = 32;
  c.model.grid_width = 32;
  c.model.channels = 256;
  c.model.dim = 256;
  c.model.heads = 8;
  c.model.ffn_dim = 256;
  c.model.query_dim = 256;
  c.model.spatial_encoder_layers = 3;
  c.model.spatial_decoder_layers = 3;
  c.model.temporal_encoder_layers = 3;
  c.model.temporal_decoder_layers = 3;
  c.data.seq_len = 7;
  c.data.stride = 10;
  c.train.epochs = 60;
  c.train.lr_generator = 1e-5;
  c.train.lr_discriminator = 1e-3;
  c.train.lr_decay = 0.7;
  c.train.lr_decay_every = 10;
  c.train.grad_clip = 0.0;
  return c;
}

Config preset_by_name(const std::string& name) {
  if (name == "desk") return desk_preset();
  if (name == "paper") return paper_preset();
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

Config parse_config(const std::string& text) {
  struct Entry {
    std::size_t line;
    std::string key;
    std::string value;
  };
  std::vector<Entry> entries;
  std::string preset = "desk";
  std::istringstream in(text);
  std::string raw;
  for (std::size_t line_no = 1; std::getline(in, raw); ++line_no) {
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    Entry e{line_no, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    if (e.key == "preset") {
      preset = e.value;
    } else {
      entries.push_back(std::move(e));
    }
  }
  Config config;
  try {
    config = preset_by_name(preset);
  } catch (const ConfigError& err) {
    throw ConfigError(std::string("field 'preset': ") + err.what());
  }
  for (const auto& e : entries) {
    const Field* f = find_field(e.key);
    if (f == nullptr) {
      throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + e.key + "'");
    }
    try {
      f->set(config, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError("line " + std::to_string(e.line) + ", field '" + e.key + "': " + err.what());
    }
  }
  config.validate();
  return config;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string config_to_text(const Config& config) {
  std::string out = "preset = " + config.preset + "\n";
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

std::uint64_t hash_text(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

std::uint64_t hash_keys(const Config& config, const std::vector<std::string>& prefixes) {
  std::string text;
  for (const auto& f : fields()) {
    const std::string key = f.key;
    for (const auto& p : prefixes) {
      if (key.rfind(p, 0) == 0) {
        text += key + "=" + f.get(config) + "\n";
        break;
      }
    }
  }
  return hash_text(text);
}

}  // namespace

std::uint64_t data_hash(const Config& config) {
  return hash_keys(config, {"data.", "model.grid_", "model.channels"});
}

std::uint64_t interface_hash(const Config& config) {
  return hash_keys(config, {"model.grid_", "model.channels", "data.seq_len", "data.stride",
                            "data.template_seed"});
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace deformer
