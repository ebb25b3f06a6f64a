#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sekge/config.hpp"
#include "sekge/kg_core.hpp"
#include "sekge/model.hpp"
#include "sekge/tensor.hpp"

namespace sekge {

/// Contents of manifest.txt: the run configuration plus checkpoint.* keys.
struct CheckpointInfo {
  TrainConfig config;
  std::size_t epoch = 0;
  double valid_mrr = 0;
  std::uint64_t entity_hash = 0;
  std::uint64_t relation_hash = 0;
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;
  DType dtype = DType::f32;
  std::uint64_t signature = 0;
  std::vector<std::string> tensors;
};

/// Writes manifest.txt and one <name>.bin tensor file per entry of
/// model.state() into `dir`, creating it if needed.
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, SeGnnModel<T>& model,
                     const TrainConfig& config, const Vocab& vocab, std::size_t epoch,
                     double valid_mrr);

CheckpointInfo read_manifest(const std::filesystem::path& dir);

/// Fatal when the checkpoint was trained over a different vocabulary.
void check_vocab(const CheckpointInfo& info, const Vocab& vocab);

/// Rebuilds the model from `dir` after checking it against `vocab`.
template <typename T>
SeGnnModel<T> load_checkpoint(const std::filesystem::path& dir, const Vocab& vocab,
                              CheckpointInfo* info = nullptr);

}  // namespace sekge
