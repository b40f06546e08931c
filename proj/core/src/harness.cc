#include "mpp/harness.h"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mpp/errors.h"
#include "mpp/image_io.h"
#include "mpp/random.h"
#include "mpp/synthetic.h"

namespace mpp {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + value + "'");
  }
  return v;
}

double parse_real(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size()) {
    throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  throw ConfigError("'" + key + "' expects a boolean, got '" + value + "'");
}

std::size_t positive(const std::string& key, std::uint64_t v) {
  if (v == 0) throw ConfigError("'" + key + "' must be >= 1");
  return static_cast<std::size_t>(v);
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, sep)) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

const char* kScaleNoiseNames[] = {"disk", "square", "triangle"};

}  // namespace

ScaleMask PipelineConfig::mask() const {
  return scale_range.empty() ? ScaleMask::all() : ScaleMask::parse(scale_range);
}

std::uint32_t PipelineConfig::num_selected_scales() const {
  return static_cast<std::uint32_t>(mask().scales(scales).size());
}

std::size_t PipelineConfig::fv_length() const {
  if (pool == PoolStrategy::kAp) return 0;
  return pooled_length(pool, gmm_k, pca_dim, num_selected_scales());
}

PipelineConfig preset_config(const std::string& name) {
  PipelineConfig c;
  if (name == "desk") return c;
  if (name == "paper") {
    c.scales = 7;
    c.pca_dim = 128;
    c.gmm_k = 256;
    c.pca_samples = 256000;
    c.scale_step = ScaleStep::kAreaDoubling;
    c.sweep_ranges = "1-4;1-5;1-6;1-7";
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (paper, desk)");
}

void apply_setting(PipelineConfig& c, const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "preset") {
    const std::string cache = c.cache_dir;
    c = preset_config(value);
    c.cache_dir = cache;
  } else if (key == "seed") {
    c.seed = parse_uint(key, value);
  } else if (key == "threads") {
    const auto t = parse_uint(key, value);
    if (t < 1 || t > 1024) throw ConfigError("'threads' must be in [1, 1024]");
    c.threads = static_cast<int>(t);
  } else if (key == "dataset") {
    if (value.empty()) throw ConfigError("'dataset' is empty");
    c.dataset = value;
  } else if (key == "classes") {
    c.num_classes = positive(key, parse_uint(key, value));
  } else if (key == "train_per_class") {
    c.train_per_class = positive(key, parse_uint(key, value));
  } else if (key == "test_per_class") {
    c.test_per_class = positive(key, parse_uint(key, value));
  } else if (key == "image_size") {
    c.image_size = parse_uint(key, value);
  } else if (key == "synthetic_options") {
    ScaleNoiseParams probe;
    apply_scale_noise_options(probe, value);
    c.synthetic_options = value;
  } else if (key == "net") {
    if (value.empty()) throw ConfigError("'net' is empty");
    c.net = value;
  } else if (key == "net_seed") {
    c.net_seed = parse_uint(key, value);
  } else if (key == "scales") {
    const auto n = parse_uint(key, value);
    if (n < 1 || n > 16) throw ConfigError("'scales' must be in [1, 16]");
    c.scales = static_cast<std::uint32_t>(n);
  } else if (key == "scale_step") {
    c.scale_step = parse_scale_step(value);
  } else if (key == "scale_range") {
    if (!value.empty() && value != "all") ScaleMask::parse(value);
    c.scale_range = value == "all" ? "" : value;
  } else if (key == "descriptor_l2") {
    c.descriptor_l2 = parse_bool(key, value);
  } else if (key == "pca_dim") {
    c.pca_dim = positive(key, parse_uint(key, value));
  } else if (key == "pca_samples") {
    c.pca_samples = positive(key, parse_uint(key, value));
  } else if (key == "pca_whiten") {
    c.pca_whiten = parse_bool(key, value);
  } else if (key == "gmm_k") {
    c.gmm_k = positive(key, parse_uint(key, value));
  } else if (key == "gmm_max_iterations") {
    c.gmm_max_iterations = positive(key, parse_uint(key, value));
  } else if (key == "pool") {
    c.pool = parse_pool_strategy(value);
  } else if (key == "svm_lambda") {
    c.svm_lambda = parse_real(key, value);
  } else if (key == "svm_epochs") {
    c.svm_epochs = positive(key, parse_uint(key, value));
  } else if (key == "cache_dir") {
    c.cache_dir = value;
  } else if (key == "sweep_ranges") {
    for (const auto& r : split_on(value, ';')) ScaleMask::parse(r);
    c.sweep_ranges = value;
  } else if (key == "sweep_pools") {
    for (const auto& p : split_on(value, ',')) parse_pool_strategy(p);
    c.sweep_pools = value;
  } else {
    throw ConfigError("unknown configuration key '" + key + "'");
  }
}

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(number) + ": empty key");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

PipelineConfig parse_config(const std::string& text, PipelineConfig base) {
  for (const auto& [k, v] : parse_key_values(text)) apply_setting(base, k, v);
  return base;
}

PipelineConfig load_config(const std::string& path, PipelineConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string config_to_text(const PipelineConfig& c) {
  std::ostringstream out;
  out << "seed = " << c.seed << '\n'
      << "threads = " << c.threads << '\n'
      << "dataset = " << c.dataset << '\n'
      << "classes = " << c.num_classes << '\n'
      << "train_per_class = " << c.train_per_class << '\n'
      << "test_per_class = " << c.test_per_class << '\n'
      << "image_size = " << c.image_size << '\n'
      << "synthetic_options = " << c.synthetic_options << '\n'
      << "net = " << c.net << '\n'
      << "net_seed = " << c.net_seed << '\n'
      << "scales = " << c.scales << '\n'
      << "scale_step = " << scale_step_name(c.scale_step) << '\n'
      << "scale_range = " << (c.scale_range.empty() ? "all" : c.scale_range) << '\n'
      << "descriptor_l2 = " << (c.descriptor_l2 ? "true" : "false") << '\n'
      << "pca_dim = " << c.pca_dim << '\n'
      << "pca_samples = " << c.pca_samples << '\n'
      << "pca_whiten = " << (c.pca_whiten ? "true" : "false") << '\n'
      << "gmm_k = " << c.gmm_k << '\n'
      << "gmm_max_iterations = " << c.gmm_max_iterations << '\n'
      << "pool = " << pool_strategy_name(c.pool) << '\n'
      << "svm_lambda = " << format_real(c.svm_lambda) << '\n'
      << "svm_epochs = " << c.svm_epochs << '\n'
      << "cache_dir = " << c.cache_dir << '\n'
      << "sweep_ranges = " << c.sweep_ranges << '\n'
      << "sweep_pools = " << c.sweep_pools << '\n';
  return out.str();
}

std::string resolve_cache_dir(const PipelineConfig& config) {
  if (!config.cache_dir.empty()) return config.cache_dir;
  if (const char* env = std::getenv("MPP_CACHE_DIR"); env != nullptr && *env != '\0') return env;
  return "mpp-cache";
}

std::vector<std::size_t> DatasetManifest::split(bool train) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].train == train) out.push_back(i);
  }
  return out;
}

DatasetManifest parse_dataset_manifest(const std::string& text, const std::string& base_dir) {
  DatasetManifest m;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  auto fail = [&](const std::string& what) {
    throw ConfigError("dataset manifest line " + std::to_string(number) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream words(line);
    std::string head;
    if (!(words >> head)) continue;
    if (head == "classes") {
      if (!m.classes.empty()) fail("duplicate class table");
      std::string name;
      while (words >> name) {
        if (std::find(m.classes.begin(), m.classes.end(), name) != m.classes.end()) {
          fail("duplicate class '" + name + "'");
        }
        m.classes.push_back(name);
      }
      if (m.classes.empty()) fail("empty class table");
      continue;
    }
    if (head != "train" && head != "test") fail("expected 'classes', 'train' or 'test'");
    if (m.classes.empty()) fail("records must follow the class table");
    DatasetRecord r;
    r.train = head == "train";
    std::string labels, extra;
    if (!(words >> r.source >> labels) || (words >> extra)) fail("expected <split> <source> <labels>");
    if (r.source.rfind("synth:", 0) != 0 && !base_dir.empty() &&
        std::filesystem::path(r.source).is_relative()) {
      r.source = (std::filesystem::path(base_dir) / r.source).string();
    }
    for (const auto& name : split_on(labels, ',')) {
      const auto it = std::find(m.classes.begin(), m.classes.end(), name);
      if (it == m.classes.end()) fail("label '" + name + "' is not in the class table");
      const auto idx = static_cast<std::size_t>(it - m.classes.begin());
      if (std::find(r.labels.begin(), r.labels.end(), idx) == r.labels.end()) r.labels.push_back(idx);
    }
    if (r.labels.empty()) fail("record without labels");
    m.records.push_back(std::move(r));
  }
  if (m.classes.size() < 2) throw ConfigError("dataset manifest needs at least two classes");
  if (m.split(true).empty() || m.split(false).empty()) {
    throw ConfigError("dataset manifest needs nonempty train and test splits");
  }
  return m;
}

DatasetManifest load_dataset_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset manifest " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset_manifest(ss.str(), std::filesystem::path(path).parent_path().string());
}

DatasetManifest dataset_for(const PipelineConfig& config) {
  const std::string prefix = "synthetic:";
  if (config.dataset.rfind(prefix, 0) != 0) return load_dataset_manifest(config.dataset);
  const std::string generator = config.dataset.substr(prefix.size());
  DatasetManifest m;
  if (generator == "scale-noise") {
    for (std::size_t c = 0; c < config.num_classes; ++c) {
      m.classes.push_back(c < 3 ? kScaleNoiseNames[c] : "class" + std::to_string(c));
    }
  } else if (generator == "planted-square") {
    m.classes = {"background", "square"};
  } else {
    throw ConfigError("unknown synthetic dataset '" + generator +
                      "' (scale-noise, planted-square)");
  }
  if (m.classes.size() < 2) throw ConfigError("synthetic dataset needs at least two classes");
  for (int split = 0; split < 2; ++split) {
    const bool train = split == 0;
    const std::size_t per_class = train ? config.train_per_class : config.test_per_class;
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t c = 0; c < m.classes.size(); ++c) {
        const std::uint64_t tag = (static_cast<std::uint64_t>(split) << 48) |
                                  (static_cast<std::uint64_t>(c) << 32) | i;
        DatasetRecord r;
        r.train = train;
        r.labels = {c};
        r.source = "synth:" + generator + ":" + std::to_string(c) + ":" +
                   std::to_string(derive_seed(config.seed, tag));
        m.records.push_back(std::move(r));
      }
    }
  }
  return m;
}

Tensor load_record_image(const DatasetRecord& record, const PipelineConfig& config,
                         std::size_t channels) {
  if (record.source.rfind("synth:", 0) != 0) return to_channels(read_pnm(record.source), channels);
  const auto parts = split_on(record.source, ':');
  if (parts.size() != 4) throw ConfigError("bad synthetic source '" + record.source + "'");
  const std::size_t cls = parse_uint("class", parts[2]);
  const std::uint64_t seed = parse_uint("seed", parts[3]);
  Tensor image;
  if (parts[1] == "scale-noise") {
    ScaleNoiseParams p;
    p.num_classes = config.num_classes;
    if (config.image_size > 0) p.size = config.image_size;
    apply_scale_noise_options(p, config.synthetic_options);
    image = make_scale_noise_image(cls, seed, p);
  } else if (parts[1] == "planted-square") {
    PlantedSquareParams p;
    if (config.image_size > 0) p.size = config.image_size;
    image = make_planted_square_image(cls != 0, seed, nullptr, p);
  } else {
    throw ConfigError("unknown synthetic generator '" + parts[1] + "'");
  }
  return to_channels(image, channels);
}

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace mpp
