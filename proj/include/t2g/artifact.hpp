#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "t2g/distill.hpp"
#include "t2g/sbm.hpp"
#include "t2g/schema.hpp"
#include "t2g/tokenizer.hpp"

namespace t2g {

// Everything evaluation needs, in one file: "T2G1" magic, fixed header, then
// five length-prefixed sections (schema JSON, tokenizer bank, structure as
// bitset rows, feature floats, label floats plus label statistics).
struct DistillationArtifact {
  std::uint32_t version = 1;
  std::uint64_t schema_fingerprint = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  Schema schema;
  TokenizerBank bank;
  SyntheticStructure structure;
  std::vector<Mat> h;
  Mat y;
  double label_mean = 0.0;
  double label_std = 1.0;
};

std::vector<std::uint8_t> serialize_artifact(const DistillationArtifact& a);
DistillationArtifact parse_artifact(const std::vector<std::uint8_t>& bytes);

void save_artifact(const DistillationArtifact& a, const std::string& path);
DistillationArtifact load_artifact(const std::string& path);

// Byte size of each section within a serialized artifact.
struct ArtifactBreakdown {
  std::int64_t total = 0;
  std::int64_t header = 0;
  std::int64_t schema = 0;
  std::int64_t tokenizers = 0;
  std::int64_t structure = 0;
  std::int64_t features = 0;
  std::int64_t labels = 0;
};

ArtifactBreakdown artifact_breakdown(const std::vector<std::uint8_t>& bytes);

struct StorageReport {
  ArtifactBreakdown artifact;
  std::int64_t original_bytes = 0;
  double compression_factor = 0.0;  // original over artifact
};

StorageReport storage_report(const std::string& artifact_path,
                             const std::vector<std::string>& original_files);

std::string storage_report_text(const StorageReport& report);

}  // namespace t2g
