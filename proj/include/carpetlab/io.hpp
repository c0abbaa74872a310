#pragma once
#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "carpetlab/boxlattice.hpp"
#include "carpetlab/carpet.hpp"
#include "carpetlab/error.hpp"
#include "carpetlab/loewner.hpp"
#include "carpetlab/percolation.hpp"
#include "carpetlab/rational.hpp"

namespace carpetlab {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kArtifactVersion = "carpetlab 0.1.0";

// ---------------------------------------------------------------------------
// Primitives. Boxes travel as [level, i, j] triples (the base is stated once
// at the top of each document), rationals as "num/den" strings.
// ---------------------------------------------------------------------------

inline json box_to_json(const BoxAddress& b) { return json::array({b.level, b.i, b.j}); }

inline BoxAddress box_from_json(const json& j, int base) {
  if (!j.is_array() || j.size() != 3)
    fail_validation("malformed-input", "box must be a [level,i,j] triple");
  return make_box(base, j[0].get<int>(), j[1].get<long long>(), j[2].get<long long>());
}

inline json rat_to_json(const Rational& r) { return r.str(); }

inline Rational rat_from_json(const json& j) {
  if (!j.is_string()) fail_validation("malformed-input", "rational must be a \"num/den\" string");
  return rat_parse(j.get<std::string>());
}

inline json boxes_to_json(const std::vector<BoxAddress>& v) {
  json out = json::array();
  for (const auto& b : v) out.push_back(box_to_json(b));
  return out;
}

inline std::vector<BoxAddress> boxes_from_json(const json& j, int base) {
  std::vector<BoxAddress> out;
  for (const auto& e : j) out.push_back(box_from_json(e, base));
  return out;
}

// ---------------------------------------------------------------------------
// Atomic file output: write a sibling temp file, then rename over the target.
// ---------------------------------------------------------------------------

inline void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  static std::atomic<unsigned> counter{0};
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail_validation("io-error", "cannot open " + tmp.string());
    out.write(content.data(), (std::streamsize)content.size());
    if (!out) fail_validation("io-error", "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail_validation("io-error", "rename failed for " + path.string());
  }
}

inline void atomic_write_bytes(const std::filesystem::path& path,
                               const std::vector<std::uint8_t>& bytes) {
  atomic_write_text(path, std::string(bytes.begin(), bytes.end()));
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  atomic_write_text(path, j.dump(2) + "\n");
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_validation("io-error", "cannot read " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    fail_validation("malformed-input", path.string() + ": " + e.what());
  }
  return j;
}

// CSV rows with no quoting needs: all fields are numbers or plain tokens.
inline std::string csv_line(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += fields[i];
  }
  line += '\n';
  return line;
}

// ---------------------------------------------------------------------------
// Document serialization.
// ---------------------------------------------------------------------------

inline json retention_to_json(const RetentionTree& tree) {
  const RetentionConfig& c = tree.config();
  json j;
  j["type"] = "retention";
  j["version"] = kFormatVersion;
  j["base"] = c.base;
  j["p"] = c.p;
  j["depth"] = c.depth;
  j["seed"] = c.seed;
  json levels = json::array();
  for (int l = 0; l <= c.depth; ++l) levels.push_back(boxes_to_json(retained_set(tree, l)));
  j["retained"] = std::move(levels);
  j["area"] = rat_to_json(retained_area(tree, c.depth));
  return j;
}

// box_levels caps how many dagger/star levels carry explicit box lists (-1 =
// all): deep levels hold tens of millions of boxes and do not belong in a
// JSON document. Counts, areas, and trims are always complete.
inline json carpet_to_json(const CarpetApprox& c, int box_levels = -1) {
  json j;
  j["type"] = "carpet";
  j["version"] = kFormatVersion;
  j["base"] = c.base;
  j["budget"] = c.budget;
  j["depth"] = c.depth;
  j["root_good"] = c.root_good;
  std::size_t keep = box_levels < 0 ? c.star_kept.size() : (std::size_t)box_levels;
  json dag = json::array(), kept = json::array(), trimmed = json::array();
  for (std::size_t l = 0; l < c.dagger.size() && l < keep; ++l)
    dag.push_back(boxes_to_json(mask_boxes(c.dagger[l], c.base)));
  for (std::size_t l = 0; l < c.star_kept.size() && l < keep; ++l)
    kept.push_back(boxes_to_json(mask_boxes(c.star_kept[l], c.base)));
  for (const auto& lv : c.star_trimmed) trimmed.push_back(boxes_to_json(lv));
  json counts = json::array();
  for (long long n : c.kept_count) counts.push_back(n);
  j["kept_count"] = std::move(counts);
  j["dagger"] = std::move(dag);
  j["star_kept"] = std::move(kept);
  j["star_trimmed"] = std::move(trimmed);
  json trims = json::array();
  for (const auto& ev : c.trim_log)
    trims.push_back(json{{"stage", ev.stage},
                         {"x", rat_to_json(ev.x)},
                         {"y", rat_to_json(ev.y)},
                         {"cut", json::array({box_to_json(ev.trimmed[0]),
                                              box_to_json(ev.trimmed[1])})}});
  j["trim_log"] = std::move(trims);
  json areas = json::array();
  for (const auto& a : c.star_area) areas.push_back(rat_to_json(a));
  j["star_area"] = std::move(areas);
  j["same_component_contacts"] = c.same_component_contacts;
  return j;
}

inline CarpetApprox carpet_from_json(const json& j) {
  if (!j.contains("type") || j["type"] != "carpet")
    fail_validation("malformed-input", "not a carpet document");
  CarpetApprox c;
  c.base = j["base"].get<int>();
  c.budget = j["budget"].get<int>();
  c.depth = j["depth"].get<int>();
  c.root_good = j["root_good"].get<bool>();
  int level = 0;
  for (const auto& lv : j["dagger"])
    c.dagger.push_back(mask_from_boxes(c.base, level++, boxes_from_json(lv, c.base)));
  level = 0;
  for (const auto& lv : j["star_kept"])
    c.star_kept.push_back(mask_from_boxes(c.base, level++, boxes_from_json(lv, c.base)));
  if (j.contains("kept_count"))
    for (const auto& n : j["kept_count"]) c.kept_count.push_back(n.get<long long>());
  else
    for (const auto& m : c.star_kept) c.kept_count.push_back(mask_count(m));
  for (const auto& lv : j["star_trimmed"]) c.star_trimmed.push_back(boxes_from_json(lv, c.base));
  for (const auto& ev : j["trim_log"]) {
    TrimEvent e;
    e.stage = ev["stage"].get<int>();
    e.x = rat_from_json(ev["x"]);
    e.y = rat_from_json(ev["y"]);
    e.trimmed = {box_from_json(ev["cut"][0], c.base), box_from_json(ev["cut"][1], c.base)};
    c.trim_log.push_back(e);
  }
  for (const auto& a : j["star_area"]) c.star_area.push_back(rat_from_json(a));
  c.same_component_contacts = j["same_component_contacts"].get<int>();
  return c;
}

inline json clusters_to_json(const ClusterSet& cs, int base) {
  json j;
  j["type"] = "clusters";
  j["version"] = kFormatVersion;
  j["base"] = base;
  j["corner_closure"] = cs.rule == AdjacencyRule::corner_closure;
  j["boxes"] = boxes_to_json(cs.boxes);
  j["cluster_of"] = cs.cluster_of;
  return j;
}

inline ClusterSet clusters_from_json(const json& j, int* base_out = nullptr) {
  if (!j.contains("type") || j["type"] != "clusters")
    fail_validation("malformed-input", "not a clusters document");
  ClusterSet cs;
  int base = j["base"].get<int>();
  if (base_out) *base_out = base;
  cs.rule = j["corner_closure"].get<bool>() ? AdjacencyRule::corner_closure
                                            : AdjacencyRule::edge_adjacency;
  cs.boxes = boxes_from_json(j["boxes"], base);
  cs.cluster_of = j["cluster_of"].get<std::vector<int>>();
  int n_clusters = 0;
  for (int c : cs.cluster_of) n_clusters = std::max(n_clusters, c + 1);
  cs.members.resize((std::size_t)n_clusters);
  for (std::size_t i = 0; i < cs.cluster_of.size(); ++i)
    cs.members[(std::size_t)cs.cluster_of[i]].push_back((int)i);
  return cs;
}

inline json trace_to_json(const TracePolyline& t) {
  json j;
  j["type"] = "trace";
  j["version"] = kFormatVersion;
  j["kappa"] = t.kappa;
  j["T"] = t.t_horizon;
  j["dt"] = t.dt;
  json tips = json::array();
  for (const auto& z : t.tips) tips.push_back(json::array({z.real(), z.imag()}));
  j["tips"] = std::move(tips);
  return j;
}

inline TracePolyline trace_from_json(const json& j) {
  if (!j.contains("type") || j["type"] != "trace")
    fail_validation("malformed-input", "not a trace document");
  TracePolyline t;
  t.kappa = j["kappa"].get<double>();
  t.t_horizon = j["T"].get<double>();
  t.dt = j["dt"].get<double>();
  for (const auto& p : j["tips"])
    t.tips.emplace_back(p[0].get<double>(), p[1].get<double>());
  return t;
}

// Run-length-encoded 0/1 label field, row-major from (0,0).
struct LabelField {
  long long width = 0, height = 0;
  std::vector<std::uint8_t> labels;
};

inline LabelField labels_from_json(const json& j) {
  if (!j.contains("type") || j["type"] != "labels")
    fail_validation("malformed-input", "not a labels document");
  LabelField f;
  f.width = j["width"].get<long long>();
  f.height = j["height"].get<long long>();
  if (f.width < 1 || f.height < 1 || f.width * f.height > (1LL << 26))
    fail_validation("out-of-range", "label field dimensions out of range");
  f.labels.reserve((std::size_t)(f.width * f.height));
  for (const auto& run : j["runs"]) {
    int value = run[0].get<int>();
    long long count = run[1].get<long long>();
    if ((value != 0 && value != 1) || count < 1)
      fail_validation("malformed-input", "label runs must be [0|1, count>=1]");
    for (long long i = 0; i < count; ++i) f.labels.push_back((std::uint8_t)value);
  }
  if ((long long)f.labels.size() != f.width * f.height)
    fail_validation("malformed-input", "label runs do not fill width*height");
  return f;
}

inline json labels_to_json(const LabelField& f) {
  json j;
  j["type"] = "labels";
  j["version"] = kFormatVersion;
  j["width"] = f.width;
  j["height"] = f.height;
  json runs = json::array();
  std::size_t i = 0;
  while (i < f.labels.size()) {
    std::size_t k = i;
    while (k < f.labels.size() && f.labels[k] == f.labels[i]) ++k;
    runs.push_back(json::array({(int)f.labels[i], (long long)(k - i)}));
    i = k;
  }
  j["runs"] = std::move(runs);
  return j;
}

// ---------------------------------------------------------------------------
// Manifests: every CLI run echoes its fully resolved configuration so the run
// can be reproduced from the manifest alone.
// ---------------------------------------------------------------------------

inline void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                           const json& resolved_config, const std::vector<std::string>& outputs) {
  json j;
  j["artifact_version"] = kArtifactVersion;
  j["version"] = kFormatVersion;
  j["command"] = command;
  j["config"] = resolved_config;
  j["outputs"] = outputs;
  write_json(out_dir / (command + ".manifest.json"), j);
}

}  // namespace carpetlab
