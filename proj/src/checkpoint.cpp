#include "sekge/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "sekge/csv.hpp"
#include "sekge/error.hpp"

namespace sekge {

namespace {

constexpr const char* kManifest = "manifest.txt";
constexpr std::string_view kPrefix = "checkpoint.";

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << v;
  return out.str();
}

std::uint64_t parse_hex(const std::string& text, const std::string& key) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used, 16);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw DataError("manifest key " + key + " is not a hex digest: '" + text + "'");
}

template <typename T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::f32 : DType::f64;
}

std::filesystem::path tensor_path(const std::filesystem::path& dir, const std::string& name) {
  return dir / (name + ".bin");
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, SeGnnModel<T>& model,
                     const TrainConfig& config, const Vocab& vocab, std::size_t epoch,
                     double valid_mrr) {
  std::filesystem::create_directories(dir);
  std::string names;
  for (const auto& [name, tensor] : model.state()) {
    save_tensor(tensor_path(dir, name), *tensor);
    if (!names.empty()) names += ',';
    names += name;
  }
  std::ofstream out(dir / kManifest);
  if (!out) throw DataError("cannot write " + (dir / kManifest).string());
  out << config.to_text();
  out << kPrefix << "epoch=" << epoch << '\n'
      << kPrefix << "valid_mrr=" << format_number(valid_mrr) << '\n'
      << kPrefix << "entity_hash=" << hex(vocab.entity_hash()) << '\n'
      << kPrefix << "relation_hash=" << hex(vocab.relation_hash()) << '\n'
      << kPrefix << "num_entities=" << vocab.num_entities() << '\n'
      << kPrefix << "num_relations=" << vocab.num_relations() << '\n'
      << kPrefix << "stacking=vertical\n"
      << kPrefix << "dtype=" << (dtype_of<T>() == DType::f32 ? "f32" : "f64") << '\n'
      << kPrefix << "signature=" << hex(config.signature()) << '\n'
      << kPrefix << "tensors=" << names << '\n';
  if (!out) throw DataError("cannot write " + (dir / kManifest).string());
}

CheckpointInfo read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifest;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  CheckpointInfo info;
  try {
    info.config = TrainConfig::from_config(Config::from_string(text, path.string()));
  } catch (const UsageError& e) {
    throw DataError(e.what());
  }

  std::map<std::string, std::string, std::less<>> meta;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.starts_with(kPrefix)) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    meta[line.substr(kPrefix.size(), eq - kPrefix.size())] = line.substr(eq + 1);
  }
  const auto need = [&](const std::string& key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) throw DataError(path.string() + ": missing " + std::string(kPrefix) + key);
    return it->second;
  };
  const auto context = path.string();
  info.epoch = static_cast<std::size_t>(parse_integer(need("epoch"), context));
  info.valid_mrr = parse_number(need("valid_mrr"), context);
  info.entity_hash = parse_hex(need("entity_hash"), "entity_hash");
  info.relation_hash = parse_hex(need("relation_hash"), "relation_hash");
  info.num_entities = static_cast<std::size_t>(parse_integer(need("num_entities"), context));
  info.num_relations = static_cast<std::size_t>(parse_integer(need("num_relations"), context));
  const auto& dtype = need("dtype");
  if (dtype == "f32") {
    info.dtype = DType::f32;
  } else if (dtype == "f64") {
    info.dtype = DType::f64;
  } else {
    throw DataError(context + ": unknown dtype '" + dtype + "'");
  }
  if (need("stacking") != "vertical") {
    throw DataError(context + ": unsupported decoder stacking '" + meta["stacking"] + "'");
  }
  info.signature = parse_hex(need("signature"), "signature");
  std::istringstream names(need("tensors"));
  std::string name;
  while (std::getline(names, name, ',')) {
    if (!name.empty()) info.tensors.push_back(name);
  }
  return info;
}

void check_vocab(const CheckpointInfo& info, const Vocab& vocab) {
  if (info.entity_hash != vocab.entity_hash() || info.num_entities != vocab.num_entities()) {
    throw DataError("entity vocabulary mismatch: checkpoint has " +
                    std::to_string(info.num_entities) + " entities (hash " +
                    hex(info.entity_hash) + "), data has " +
                    std::to_string(vocab.num_entities()) + " (hash " + hex(vocab.entity_hash()) +
                    ")");
  }
  if (info.relation_hash != vocab.relation_hash() || info.num_relations != vocab.num_relations()) {
    throw DataError("relation vocabulary mismatch: checkpoint has " +
                    std::to_string(info.num_relations) + " relation ids (hash " +
                    hex(info.relation_hash) + "), data has " +
                    std::to_string(vocab.num_relations()) + " (hash " +
                    hex(vocab.relation_hash()) + ")");
  }
}

template <typename T>
SeGnnModel<T> load_checkpoint(const std::filesystem::path& dir, const Vocab& vocab,
                              CheckpointInfo* info_out) {
  const auto info = read_manifest(dir);
  check_vocab(info, vocab);
  SeGnnModel<T> model(info.config, info.num_entities, info.num_relations);
  for (const auto& [name, tensor] : model.state()) {
    const auto path = tensor_path(dir, name);
    if (!std::filesystem::exists(path)) throw DataError("checkpoint tensor missing: " + path.string());
    auto loaded = load_tensor<T>(path);
    if (loaded.shape() != tensor->shape()) {
      throw DataError("checkpoint tensor " + name + " has shape " + shape_string(loaded.shape()) +
                      ", expected " + shape_string(tensor->shape()));
    }
    *tensor = std::move(loaded);
  }
  if (info_out != nullptr) *info_out = info;
  return model;
}

template void save_checkpoint<float>(const std::filesystem::path&, SeGnnModel<float>&,
                                     const TrainConfig&, const Vocab&, std::size_t, double);
template void save_checkpoint<double>(const std::filesystem::path&, SeGnnModel<double>&,
                                      const TrainConfig&, const Vocab&, std::size_t, double);
template SeGnnModel<float> load_checkpoint<float>(const std::filesystem::path&, const Vocab&,
                                                  CheckpointInfo*);
template SeGnnModel<double> load_checkpoint<double>(const std::filesystem::path&, const Vocab&,
                                                    CheckpointInfo*);

}  // namespace sekge
