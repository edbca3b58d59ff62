#include "t2g/artifact.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <utility>

#include "t2g/errors.hpp"
#include "t2g/reg.hpp"

namespace t2g {

namespace {

constexpr char kMagic[4] = {'T', '2', 'G', '1'};
constexpr std::uint32_t kVersion = 1;
// magic + version + fingerprint + seed + config hash
constexpr std::int64_t kHeaderBytes = 4 + 4 + 8 + 8 + 8;

void write_mat(ByteWriter& out, const Mat& m) {
  out.u32(static_cast<std::uint32_t>(m.rows()));
  out.u32(static_cast<std::uint32_t>(m.cols()));
  for (std::size_t i = 0; i < m.size(); ++i) out.f64(m.data()[i]);
}

Mat read_mat(ByteReader& in) {
  const int rows = static_cast<int>(in.u32());
  const int cols = static_cast<int>(in.u32());
  Mat m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = in.f64();
  return m;
}

std::string schema_section(const DistillationArtifact& a) {
  return canonical_schema_json(a.schema);
}

std::string bank_section(const DistillationArtifact& a) {
  ByteWriter out;
  write_bank(a.bank, out);
  return out.data();
}

std::string structure_section(const DistillationArtifact& a) {
  const Reg& graph = a.structure.graph;
  ByteWriter out;
  out.u32(static_cast<std::uint32_t>(graph.node_counts.size()));
  for (int count : graph.node_counts) out.u32(static_cast<std::uint32_t>(count));
  // forward relations only, one bitset row per source node
  for (size_t k = 0; k < graph.relations.size(); k += 2) {
    const RelationType& rel = graph.relations[k];
    const int rows = graph.node_counts[rel.src_table];
    const int cols = graph.node_counts[rel.dst_table];
    std::vector<std::uint8_t> bits(
        static_cast<std::size_t>(rows) * ((cols + 7) / 8), 0);
    const CsrAdj& adj = graph.adjacency[k];
    for (int w = 0; w < adj.num_dst; ++w)
      for (std::int64_t e = adj.offsets[w]; e < adj.offsets[w + 1]; ++e) {
        const int v = adj.srcs[e];
        bits[static_cast<std::size_t>(v) * ((cols + 7) / 8) + w / 8] |=
            static_cast<std::uint8_t>(1u << (w % 8));
      }
    out.bytes(bits.data(), bits.size());
  }
  return out.data();
}

std::string features_section(const DistillationArtifact& a) {
  ByteWriter out;
  out.u32(static_cast<std::uint32_t>(a.h.size()));
  for (const Mat& m : a.h) write_mat(out, m);
  return out.data();
}

std::string labels_section(const DistillationArtifact& a) {
  ByteWriter out;
  write_mat(out, a.y);
  out.f64(a.label_mean);
  out.f64(a.label_std);
  return out.data();
}

}  // namespace

std::vector<std::uint8_t> serialize_artifact(const DistillationArtifact& a) {
  ByteWriter out;
  out.bytes(kMagic, 4);
  out.u32(kVersion);
  out.u64(a.schema_fingerprint);
  out.u64(a.seed);
  out.u64(a.config_hash);
  for (const std::string& section :
       {schema_section(a), bank_section(a), structure_section(a),
        features_section(a), labels_section(a)})
    out.str(section);
  return {out.data().begin(), out.data().end()};
}

DistillationArtifact parse_artifact(const std::vector<std::uint8_t>& bytes) {
  ByteReader in(std::string_view(
      reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  char magic[4];
  in.raw(magic, 4);
  if (std::string_view(magic, 4) != std::string_view(kMagic, 4))
    throw ValidationError("not a distillation artifact");
  DistillationArtifact a;
  a.version = in.u32();
  if (a.version != kVersion)
    throw ValidationError("unsupported artifact version " +
                          std::to_string(a.version));
  a.schema_fingerprint = in.u64();
  a.seed = in.u64();
  a.config_hash = in.u64();

  const std::string schema_json = in.str();
  a.schema = parse_schema(schema_json);
  if (schema_fingerprint(a.schema) != a.schema_fingerprint)
    throw ValidationError("artifact schema does not match its fingerprint");

  const std::string bank_bytes = in.str();
  ByteReader bank_in(bank_bytes);
  a.bank = read_bank(bank_in);

  const std::string structure_bytes = in.str();
  ByteReader sin(structure_bytes);
  Reg& graph = a.structure.graph;
  const std::uint32_t n_tables = sin.u32();
  for (std::uint32_t t = 0; t < n_tables; ++t)
    graph.node_counts.push_back(static_cast<int>(sin.u32()));
  graph.relations = relations_from_schema(a.schema);
  graph.adjacency.resize(graph.relations.size());
  for (size_t k = 0; k < graph.relations.size(); k += 2) {
    const RelationType& rel = graph.relations[k];
    const int rows = graph.node_counts[rel.src_table];
    const int cols = graph.node_counts[rel.dst_table];
    const int stride = (cols + 7) / 8;
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(rows) * stride);
    sin.raw(bits.data(), bits.size());
    std::vector<std::pair<int, int>> edges;
    for (int v = 0; v < rows; ++v)
      for (int w = 0; w < cols; ++w)
        if (bits[static_cast<std::size_t>(v) * stride + w / 8] &
            (1u << (w % 8)))
          edges.emplace_back(v, w);
    graph.adjacency[k] = csr_from_edges(rows, cols, edges);
    graph.adjacency[k + 1] = csr_transpose(graph.adjacency[k]);
    a.structure.density.push_back(
        static_cast<double>(edges.size()) /
        (static_cast<double>(rows) * static_cast<double>(cols)));
  }
  if (!sin.exhausted())
    throw ValidationError("artifact structure section has trailing bytes");

  const std::string feature_bytes = in.str();
  ByteReader fin(feature_bytes);
  const std::uint32_t n_feature_tables = fin.u32();
  for (std::uint32_t t = 0; t < n_feature_tables; ++t)
    a.h.push_back(read_mat(fin));

  const std::string label_bytes = in.str();
  ByteReader lin(label_bytes);
  a.y = read_mat(lin);
  a.label_mean = lin.f64();
  a.label_std = lin.f64();
  if (!in.exhausted())
    throw ValidationError("artifact has trailing bytes");
  return a;
}

void save_artifact(const DistillationArtifact& a, const std::string& path) {
  const std::vector<std::uint8_t> bytes = serialize_artifact(a);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("short write to " + path);
}

DistillationArtifact load_artifact(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_artifact(bytes);
}

ArtifactBreakdown artifact_breakdown(const std::vector<std::uint8_t>& bytes) {
  ByteReader in(std::string_view(
      reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  char magic[4];
  in.raw(magic, 4);
  if (std::string_view(magic, 4) != std::string_view(kMagic, 4))
    throw ValidationError("not a distillation artifact");
  in.u32();
  in.u64();
  in.u64();
  in.u64();
  ArtifactBreakdown b;
  b.total = static_cast<std::int64_t>(bytes.size());
  b.header = kHeaderBytes;
  std::int64_t* sections[] = {&b.schema, &b.tokenizers, &b.structure,
                              &b.features, &b.labels};
  for (std::int64_t* section : sections)
    // prefix is part of the section's cost
    *section = 8 + static_cast<std::int64_t>(in.str().size());
  return b;
}

StorageReport storage_report(const std::string& artifact_path,
                             const std::vector<std::string>& original_files) {
  std::ifstream in(artifact_path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + artifact_path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  StorageReport report;
  report.artifact = artifact_breakdown(bytes);
  for (const std::string& file : original_files) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(file, ec);
    if (ec) throw ValidationError("cannot stat " + file);
    report.original_bytes += static_cast<std::int64_t>(size);
  }
  if (report.artifact.total > 0)
    report.compression_factor =
        static_cast<double>(report.original_bytes) / report.artifact.total;
  return report;
}

std::string storage_report_text(const StorageReport& report) {
  char buf[512];
  std::snprintf(
      buf, sizeof(buf),
      "original_bytes=%lld\nartifact_bytes=%lld\nschema_bytes=%lld\n"
      "tokenizer_bytes=%lld\nstructure_bytes=%lld\nfeature_bytes=%lld\n"
      "label_bytes=%lld\ncompression_factor=%.2f\n",
      static_cast<long long>(report.original_bytes),
      static_cast<long long>(report.artifact.total),
      static_cast<long long>(report.artifact.schema),
      static_cast<long long>(report.artifact.tokenizers),
      static_cast<long long>(report.artifact.structure),
      static_cast<long long>(report.artifact.features),
      static_cast<long long>(report.artifact.labels),
      report.compression_factor);
  return buf;
}

}  // namespace t2g
