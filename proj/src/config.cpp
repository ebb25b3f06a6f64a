#include "sekge/config.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "sekge/error.hpp"

namespace sekge {

namespace {

constexpr std::array<ConfigKey, 30> kSchema{{
    {"n", std::nullopt, "embedding dimension (required)"},
    {"layers", "2", "number of aggregation layers K"},
    {"composition", "mul", "triple-branch composition: add | mul | mlp"},
    {"activation", "tanh", "branch activation: tanh | relu"},
    {"reshape_rows", "10", "decoder reshape height d1"},
    {"reshape_cols", "0", "decoder reshape width d2 (0 = n / reshape_rows)"},
    {"channels", "32", "decoder convolution filters"},
    {"kernel", "3", "decoder convolution kernel size (odd)"},
    {"message_dropout", "0.1", "dropout on each aggregation branch output"},
    {"input_dropout", "0.2", "decoder input dropout"},
    {"feature_dropout", "0.2", "decoder feature-map dropout"},
    {"hidden_dropout", "0.3", "decoder hidden dropout"},
    {"bn_momentum", "0.1", "batch-norm running-statistics momentum"},
    {"lr", "0.0003", "Adam learning rate"},
    {"adam_beta1", "0.9", "Adam first-moment decay"},
    {"adam_beta2", "0.999", "Adam second-moment decay"},
    {"adam_eps", "1e-08", "Adam epsilon"},
    {"batch_size", "256", "query groups per training batch"},
    {"epochs", "500", "maximum training epochs"},
    {"label_smoothing", "0.1", "label smoothing in [0, 1)"},
    {"edge_removal_rate", "0.2", "per-batch random aggregation-edge removal rate in [0, 1)"},
    {"leakage_removal", "true", "remove batch query edges and their inverses from aggregation"},
    {"seed", "42", "random seed"},
    {"eval_every", "1", "epochs between validation evaluations"},
    {"patience", "10", "evaluations without improvement before stopping"},
    {"eval_batch_size", "256", "queries scored per evaluation batch"},
    {"data_dir", "", "directory with train.txt, valid.txt, test.txt"},
    {"allow_unseen", "false", "keep valid/test triples whose entities are absent from train"},
    {"threads", "1", "worker threads"},
    {"out_dir", "", "checkpoint output directory"},
}};

constexpr std::string_view kMetaPrefix = "checkpoint.";

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

const ConfigKey* find_key(std::string_view name) {
  for (const auto& key : kSchema) {
    if (key.name == name) return &key;
  }
  return nullptr;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

class Resolver {
 public:
  explicit Resolver(const Config& config) : config_(config) {}

  std::string raw(std::string_view key) const {
    if (auto v = config_.get(key)) return *v;
    const auto* schema = find_key(key);
    if (schema == nullptr || !schema->default_value) {
      throw UsageError("missing required config key '" + std::string(key) + "'");
    }
    return std::string(*schema->default_value);
  }

  template <typename Int>
  Int integer(std::string_view key) const {
    const auto text = raw(key);
    Int value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
      throw UsageError("config key '" + std::string(key) + "' expects an integer, got '" + text +
                       "'");
    }
    return value;
  }

  double real(std::string_view key) const {
    const auto text = raw(key);
    double value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
      throw UsageError("config key '" + std::string(key) + "' expects a number, got '" + text +
                       "'");
    }
    return value;
  }

  bool boolean(std::string_view key) const {
    const auto text = raw(key);
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw UsageError("config key '" + std::string(key) + "' expects true or false, got '" + text +
                     "'");
  }

 private:
  const Config& config_;
};

void require_range(bool ok, std::string_view key, std::string_view what) {
  if (!ok) throw UsageError("config key '" + std::string(key) + "' " + std::string(what));
}

}  // namespace

std::span<const ConfigKey> config_schema() { return kSchema; }

Config Config::from_string(std::string_view text, std::string_view origin) {
  Config config;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find('\n', start), text.size());
    const auto line = trim(text.substr(start, end - start));
    ++line_no;
    start = end + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError(std::string(origin) + ":" + std::to_string(line_no) +
                       ": expected key=value");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.starts_with(kMetaPrefix)) continue;
    try {
      config.set(key, trim(line.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError(std::string(origin) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

Config Config::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str(), path.string());
}

void Config::set(std::string_view key, std::string_view value) {
  if (find_key(key) == nullptr) throw UsageError("unknown config key '" + std::string(key) + "'");
  values_.insert_or_assign(std::string(key), std::string(value));
}

std::optional<std::string> Config::get(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

TrainConfig TrainConfig::from_config(const Config& config) {
  const Resolver r(config);
  TrainConfig c;
  c.n = r.integer<std::size_t>("n");
  require_range(c.n > 0, "n", "must be positive");
  c.layers = r.integer<std::size_t>("layers");
  require_range(c.layers > 0, "layers", "must be at least 1");
  c.composition = parse_composition(r.raw("composition"));
  c.activation = parse_activation(r.raw("activation"));
  c.reshape_rows = r.integer<std::size_t>("reshape_rows");
  require_range(c.reshape_rows > 0, "reshape_rows", "must be positive");
  c.reshape_cols = r.integer<std::size_t>("reshape_cols");
  if (c.reshape_cols == 0) {
    require_range(c.n % c.reshape_rows == 0, "reshape_rows", "must divide n");
    c.reshape_cols = c.n / c.reshape_rows;
  }
  require_range(c.reshape_rows * c.reshape_cols == c.n, "reshape_cols",
                "times reshape_rows must equal n");
  c.channels = r.integer<std::size_t>("channels");
  c.kernel = r.integer<std::size_t>("kernel");
  require_range(c.kernel % 2 == 1, "kernel", "must be odd");
  c.message_dropout = r.real("message_dropout");
  c.input_dropout = r.real("input_dropout");
  c.feature_dropout = r.real("feature_dropout");
  c.hidden_dropout = r.real("hidden_dropout");
  for (auto [key, v] : {std::pair{"message_dropout", c.message_dropout},
                        std::pair{"input_dropout", c.input_dropout},
                        std::pair{"feature_dropout", c.feature_dropout},
                        std::pair{"hidden_dropout", c.hidden_dropout}}) {
    require_range(v >= 0 && v < 1, key, "must lie in [0, 1)");
  }
  c.bn_momentum = r.real("bn_momentum");
  c.lr = r.real("lr");
  require_range(c.lr > 0, "lr", "must be positive");
  c.adam_beta1 = r.real("adam_beta1");
  c.adam_beta2 = r.real("adam_beta2");
  c.adam_eps = r.real("adam_eps");
  c.batch_size = r.integer<std::size_t>("batch_size");
  require_range(c.batch_size > 0, "batch_size", "must be positive");
  c.epochs = r.integer<std::size_t>("epochs");
  c.label_smoothing = r.real("label_smoothing");
  require_range(c.label_smoothing >= 0 && c.label_smoothing < 1, "label_smoothing",
                "must lie in [0, 1)");
  c.edge_removal_rate = r.real("edge_removal_rate");
  require_range(c.edge_removal_rate >= 0 && c.edge_removal_rate < 1, "edge_removal_rate",
                "must lie in [0, 1)");
  c.leakage_removal = r.boolean("leakage_removal");
  c.seed = r.integer<std::uint64_t>("seed");
  c.eval_every = r.integer<std::size_t>("eval_every");
  require_range(c.eval_every > 0, "eval_every", "must be positive");
  c.patience = r.integer<std::size_t>("patience");
  c.eval_batch_size = r.integer<std::size_t>("eval_batch_size");
  require_range(c.eval_batch_size > 0, "eval_batch_size", "must be positive");
  c.data_dir = r.raw("data_dir");
  c.allow_unseen = r.boolean("allow_unseen");
  c.threads = r.integer<std::size_t>("threads");
  require_range(c.threads > 0, "threads", "must be positive");
  return c;
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  const auto put = [&](std::string_view key, const std::string& value) {
    out << key << '=' << value << '\n';
  };
  put("n", std::to_string(n));
  put("layers", std::to_string(layers));
  put("composition", std::string(composition_name(composition)));
  put("activation", std::string(activation_name(activation)));
  put("reshape_rows", std::to_string(reshape_rows));
  put("reshape_cols", std::to_string(reshape_cols));
  put("channels", std::to_string(channels));
  put("kernel", std::to_string(kernel));
  put("message_dropout", format_double(message_dropout));
  put("input_dropout", format_double(input_dropout));
  put("feature_dropout", format_double(feature_dropout));
  put("hidden_dropout", format_double(hidden_dropout));
  put("bn_momentum", format_double(bn_momentum));
  put("lr", format_double(lr));
  put("adam_beta1", format_double(adam_beta1));
  put("adam_beta2", format_double(adam_beta2));
  put("adam_eps", format_double(adam_eps));
  put("batch_size", std::to_string(batch_size));
  put("epochs", std::to_string(epochs));
  put("label_smoothing", format_double(label_smoothing));
  put("edge_removal_rate", format_double(edge_removal_rate));
  put("leakage_removal", leakage_removal ? "true" : "false");
  put("seed", std::to_string(seed));
  put("eval_every", std::to_string(eval_every));
  put("patience", std::to_string(patience));
  put("eval_batch_size", std::to_string(eval_batch_size));
  put("data_dir", data_dir);
  put("allow_unseen", allow_unseen ? "true" : "false");
  put("threads", std::to_string(threads));
  return out.str();
}

std::uint64_t TrainConfig::signature() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : to_text()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string config_help() {
  std::ostringstream out;
  out << "Configuration keys (key=value file, each overridable with --key value):\n";
  for (const auto& key : kSchema) {
    out << "  " << key.name;
    for (std::size_t i = key.name.size(); i < 20; ++i) out << ' ';
    out << key.help;
    if (key.default_value) {
      out << " [default: " << (key.default_value->empty() ? "\"\"" : *key.default_value) << "]";
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace sekge
