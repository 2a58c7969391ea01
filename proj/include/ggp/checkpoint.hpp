#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "ggp/svgp.hpp"
#include "ggp/train.hpp"

namespace ggp {

/// Everything needed to predict with a fitted model, given the dataset it
/// was trained on. Serialized as JSON with matrices stored as base64 of
/// little-endian IEEE doubles, so a write/read cycle is bit-exact.
struct Checkpoint {
  std::uint64_t dataset_fingerprint = 0;
  std::uint64_t graph_fingerprint = 0;
  KernelSpec spec;
  RobustMax likelihood;
  TrainConfig config;  // carries quad_points and the tfidf flag
  bool l2_normalize = true;
  VariationalState state;
  std::vector<LabelledNode> labels;
  double final_elbo = 0.0;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b);
};

Checkpoint make_checkpoint(const TrainedModel& model, std::uint64_t dataset_fingerprint);

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ggp
