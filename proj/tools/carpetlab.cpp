#include <CLI11.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "carpetlab/boxlattice.hpp"
#include "carpetlab/carpet.hpp"
#include "carpetlab/error.hpp"
#include "carpetlab/gff.hpp"
#include "carpetlab/goodness.hpp"
#include "carpetlab/io.hpp"
#include "carpetlab/loewner.hpp"
#include "carpetlab/pathgraph.hpp"
#include "carpetlab/percolation.hpp"
#include "carpetlab/rational.hpp"
#include "carpetlab/render.hpp"
#include "carpetlab/rng.hpp"
#include "carpetlab/stats.hpp"

namespace fs = std::filesystem;
using carpetlab::json;

namespace {

// Remembered so a failed run can report the seed that reproduces it.
std::optional<std::uint64_t> g_seed;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

void require_fields_valid(const std::vector<std::string>& offending) {
  if (!offending.empty())
    carpetlab::fail_validation("out-of-range", "invalid fields: " + join(offending, ", "));
}

// ---------------------------------------------------------------------------
// Config merging: --config supplies defaults for every option not given on the
// command line. A manifest from a previous run is accepted directly, so
// `carpetlab <cmd> --config out/<cmd>.manifest.json` reruns it bit-identically.
// ---------------------------------------------------------------------------

struct ConfigBinder {
  std::vector<std::pair<CLI::Option*, std::function<void(const json&)>>> binds;

  void apply(const json& cfg) {
    for (auto& [opt, set] : binds) {
      const std::string key = opt->get_lnames().front();
      if (opt->count() == 0 && cfg.contains(key)) set(cfg.at(key));
    }
  }
};

template <class T>
CLI::Option* bind_opt(CLI::App* cmd, ConfigBinder& b, const std::string& name, T& var,
                      const std::string& help) {
  auto* opt = cmd->add_option(name, var, help);
  b.binds.emplace_back(opt, [&var](const json& v) { var = v.get<T>(); });
  return opt;
}

CLI::Option* bind_flag(CLI::App* cmd, ConfigBinder& b, const std::string& name, bool& var,
                       const std::string& help) {
  auto* opt = cmd->add_flag(name, var, help);
  b.binds.emplace_back(opt, [&var](const json& v) { var = v.get<bool>(); });
  return opt;
}

json load_config(const std::string& path, const std::string& command) {
  json j = carpetlab::read_json(path);
  if (!j.is_object()) carpetlab::fail_validation("malformed-input", "config must be an object");
  if (j.contains("command")) {
    if (j["command"] != command)
      carpetlab::fail_validation("malformed-input",
                                 "manifest is for subcommand '" +
                                     j["command"].get<std::string>() + "', not '" + command +
                                     "'");
    if (!j.contains("config") || !j["config"].is_object())
      carpetlab::fail_validation("malformed-input", "manifest has no config object");
    return j["config"];
  }
  return j;
}

// ---------------------------------------------------------------------------
// percolate: sample a retention tree, cluster the removed boxes, emit stats.
// ---------------------------------------------------------------------------

struct PercolateCmd {
  CLI::App* cmd = nullptr;
  ConfigBinder bind;
  std::string config_path;
  int N = 3, depth = 4, depth_limit = 12;
  double p = 0.8;
  std::uint64_t seed = 1;
  std::string rule = "edge", out = "out";
  bool checked = false;

  void setup(CLI::App& app) {
    cmd = app.add_subcommand("percolate", "sample a retention tree and its removed-box clusters");
    cmd->add_option("--config", config_path, "JSON config or manifest supplying defaults");
    bind_opt(cmd, bind, "--N", N, "subdivision base");
    bind_opt(cmd, bind, "--p", p, "per-box retention probability");
    bind_opt(cmd, bind, "--depth", depth, "deepest sampled level");
    bind_opt(cmd, bind, "--depth-limit", depth_limit, "hard cap on depth");
    bind_opt(cmd, bind, "--seed", seed, "root seed");
    bind_opt(cmd, bind, "--rule", rule, "removed-box adjacency: edge or corner");
    bind_opt(cmd, bind, "--out", out, "output directory");
    bind_flag(cmd, bind, "--checked", checked, "run extra postcondition checks");
  }

  void run() {
    if (!config_path.empty()) bind.apply(load_config(config_path, "percolate"));
    std::vector<std::string> offending;
    if (N < 2) offending.push_back("N");
    if (!(p >= 0.0 && p <= 1.0)) offending.push_back("p");
    if (depth < 1) offending.push_back("depth");
    if (rule != "edge" && rule != "corner") offending.push_back("rule");
    require_fields_valid(offending);
    g_seed = seed;

    carpetlab::RetentionConfig rc{N, p, depth, seed, depth_limit};
    auto tree = carpetlab::RetentionTree::sample(rc);
    auto removed = carpetlab::removed_boxes(tree, depth);
    auto rstats = carpetlab::removed_stats(removed, N, depth);
    auto arule = rule == "corner" ? carpetlab::AdjacencyRule::corner_closure
                                  : carpetlab::AdjacencyRule::edge_adjacency;
    auto cs = carpetlab::clusters(removed, arule, N);
    auto final_area = carpetlab::retained_area(tree, depth);

    if (checked)
      carpetlab::check(final_area + rstats.total_area == carpetlab::Rational(1),
                       "tiling-violation",
                       "retained and removed areas do not tile the unit square");

    fs::path dir(out);
    carpetlab::write_json(dir / "retention.json", carpetlab::retention_to_json(tree));
    carpetlab::write_json(dir / "clusters.json", carpetlab::clusters_to_json(cs, N));

    std::string csv = carpetlab::csv_line(
        {"seed", "level", "retained_count", "retained_area", "removed_count"});
    for (int l = 0; l <= depth; ++l)
      csv += carpetlab::csv_line({std::to_string(seed), std::to_string(l),
                                  std::to_string(carpetlab::retained_count(tree, l)),
                                  carpetlab::retained_area(tree, l).str(),
                                  std::to_string(rstats.count_per_level[(std::size_t)l])});
    carpetlab::atomic_write_text(dir / "percolate_stats.csv", csv);

    json summary;
    summary["base"] = N;
    summary["p"] = p;
    summary["depth"] = depth;
    summary["seed"] = seed;
    summary["rule"] = rule;
    summary["cluster_count"] = cs.members.size();
    summary["corner_contacts"] = cs.corner_contacts.size();
    summary["removed_total_area"] = carpetlab::rat_to_json(rstats.total_area);
    summary["retained_area_final"] = carpetlab::rat_to_json(final_area);
    carpetlab::write_json(dir / "percolate_summary.json", summary);

    carpetlab::write_manifest(dir, "percolate", resolved(),
                              {"retention.json", "clusters.json", "percolate_stats.csv",
                               "percolate_summary.json"});
    std::cout << "percolate: N=" << N << " p=" << p << " depth=" << depth << " seed=" << seed
              << " -> " << removed.size() << " removed boxes, " << cs.members.size()
              << " clusters, retained area " << final_area.str() << "\n";
  }

  json resolved() const {
    return json{{"N", N},       {"p", p},     {"depth", depth}, {"depth-limit", depth_limit},
                {"seed", seed}, {"rule", rule}, {"out", out},   {"checked", checked}};
  }
};

// ---------------------------------------------------------------------------
// carpet: dagger/star carpet extraction, or the removed-cluster carpet.
// ---------------------------------------------------------------------------

struct CarpetCmd {
  CLI::App* cmd = nullptr;
  ConfigBinder bind;
  std::string config_path;
  int N = 6, depth = 3, budget = 2, depth_limit = 12, artifact_depth = 0;
  double p = 0.999;
  std::uint64_t seed = 1;
  std::string mode = "star", rule = "edge", out = "out";
  bool checked = false;

  void setup(CLI::App& app) {
    cmd = app.add_subcommand("carpet", "extract a carpet from a sampled retention tree");
    cmd->add_option("--config", config_path, "JSON config or manifest supplying defaults");
    bind_opt(cmd, bind, "--N", N, "subdivision base (star mode needs N >= 6)");
    bind_opt(cmd, bind, "--p", p, "per-box retention probability");
    bind_opt(cmd, bind, "--depth", depth, "deepest sampled level");
    bind_opt(cmd, bind, "--depth-limit", depth_limit, "hard cap on depth");
    bind_opt(cmd, bind, "--budget", budget, "goodness budget for the dagger sequence");
    bind_opt(cmd, bind, "--seed", seed, "root seed");
    bind_opt(cmd, bind, "--mode", mode, "star (corner-trimmed) or cluster (removed-box) carpet");
    bind_opt(cmd, bind, "--rule", rule, "cluster mode adjacency: edge or corner");
    bind_opt(cmd, bind, "--artifact-depth", artifact_depth,
             "deepest level whose boxes are listed in carpet.json (0 = size-capped auto)");
    bind_opt(cmd, bind, "--out", out, "output directory");
    bind_flag(cmd, bind, "--checked", checked, "run extra postcondition checks");
  }

  void run() {
    if (!config_path.empty()) bind.apply(load_config(config_path, "carpet"));
    std::vector<std::string> offending;
    if (N < 2) offending.push_back("N");
    if (!(p >= 0.0 && p <= 1.0)) offending.push_back("p");
    if (depth < 1) offending.push_back("depth");
    if (budget < 0) offending.push_back("budget");
    if (mode != "star" && mode != "cluster") offending.push_back("mode");
    if (rule != "edge" && rule != "corner") offending.push_back("rule");
    require_fields_valid(offending);
    g_seed = seed;

    carpetlab::RetentionConfig rc{N, p, depth, seed, depth_limit};
    auto tree = carpetlab::RetentionTree::sample(rc);
    fs::path dir(out);

    if (mode == "star") {
      auto dagger = carpetlab::dagger_sequence(tree, depth, budget);
      auto carpet = carpetlab::star_trim(dagger);
      std::size_t box_levels = carpet.star_kept.size();
      if (artifact_depth > 0) {
        box_levels = std::min<std::size_t>(box_levels, (std::size_t)artifact_depth + 1);
      } else {
        long long cum = 0;
        std::size_t k = 0;
        while (k < carpet.star_kept.size() && cum + carpet.kept_count[k] <= 200000)
          cum += carpet.kept_count[k++];
        box_levels = std::max<std::size_t>(k, 1);
      }
      carpetlab::write_json(dir / "carpet.json",
                            carpetlab::carpet_to_json(carpet, (int)box_levels));

      auto comps = carpetlab::track_components(carpet);
      auto rep = carpetlab::whyburn_report(comps, carpet.root_good);

      json wj;
      wj["root_good"] = rep.root_good;
      wj["has_pairs"] = rep.has_pairs;
      if (rep.has_pairs) {
        wj["min_gap"] = carpetlab::rat_to_json(rep.min_gap);
        wj["min_gap_exact"] = rep.min_gap_exact;
      }
      json diam = json::array();
      for (const auto& [birth, d] : rep.max_diameter_per_birth)
        diam.push_back(json::array({birth, carpetlab::rat_to_json(d)}));
      wj["max_diameter_per_birth"] = diam;
      wj["diameters_nonincreasing"] = rep.diameters_nonincreasing;
      json areas = json::array();
      for (const auto& a : rep.star_area) areas.push_back(carpetlab::rat_to_json(a));
      wj["star_area"] = areas;
      wj["area_ratio"] = rep.area_ratio;
      wj["area_nonincreasing"] = rep.area_nonincreasing;
      wj["same_component_contacts"] = rep.same_component_contacts;
      json shortfall = json::array();
      for (const auto& lv : dagger.child_shortfall) shortfall.push_back(lv.size());
      wj["child_shortfall_per_level"] = shortfall;
      wj["pass"] = rep.pass;
      carpetlab::write_json(dir / "whyburn.json", wj);

      std::string csv =
          carpetlab::csv_line({"stage", "kept_count", "trimmed_count", "star_area"});
      for (int n = 0; n < (int)carpet.star_kept.size(); ++n) {
        std::size_t trimmed = n < (int)carpet.star_trimmed.size()
                                  ? carpet.star_trimmed[(std::size_t)n].size()
                                  : 0;
        csv += carpetlab::csv_line({std::to_string(n),
                                    std::to_string(carpet.kept_count[(std::size_t)n]),
                                    std::to_string(trimmed),
                                    carpet.star_area[(std::size_t)n].str()});
      }
      carpetlab::atomic_write_text(dir / "carpet_stats.csv", csv);

      carpetlab::write_manifest(dir, "carpet", resolved(),
                                {"carpet.json", "whyburn.json", "carpet_stats.csv"});
      std::cout << "carpet: star mode, root_good=" << (carpet.root_good ? "yes" : "no")
                << ", contacts trimmed=" << carpet.trim_log.size()
                << ", whyburn pass=" << (rep.pass ? "yes" : "no") << "\n";
    } else {
      auto removed = carpetlab::removed_boxes(tree, depth);
      auto arule = rule == "corner" ? carpetlab::AdjacencyRule::corner_closure
                                    : carpetlab::AdjacencyRule::edge_adjacency;
      auto cs = carpetlab::clusters(removed, arule, N);
      auto cc = carpetlab::cluster_carpet(cs, N, depth);
      carpetlab::write_json(dir / "clusters.json", carpetlab::clusters_to_json(cs, N));

      long long u_cells = 0, carpet_cells = 0;
      for (auto v : cc.u_cells) u_cells += v;
      for (auto v : cc.carpet_cells) carpet_cells += v;
      json cj;
      cj["event_e"] = cc.event_e;
      cj["base"] = cc.base;
      cj["level"] = cc.level;
      cj["side"] = cc.side;
      cj["u_area"] = carpetlab::rat_to_json(cc.u_area);
      cj["carpet_area"] = carpetlab::rat_to_json(cc.carpet_area);
      cj["boundary_clusters"] = cc.boundary_clusters;
      cj["clusters_in_u"] = cc.clusters_in_u;
      cj["outermost"] = cc.outermost;
      cj["u_cell_count"] = u_cells;
      cj["carpet_cell_count"] = carpet_cells;
      cj["touching_cluster_pairs"] = cc.touching_cluster_pairs;
      cj["unresolved_corners"] = cc.unresolved_corners;
      carpetlab::write_json(dir / "cluster_carpet.json", cj);

      carpetlab::write_manifest(dir, "carpet", resolved(),
                                {"clusters.json", "cluster_carpet.json"});
      std::cout << "carpet: cluster mode, event E " << (cc.event_e ? "holds" : "fails")
                << ", carpet area " << cc.carpet_area.str() << "\n";
    }
  }

  json resolved() const {
    return json{{"N", N},           {"p", p},       {"depth", depth},
                {"depth-limit", depth_limit},       {"budget", budget},
                {"seed", seed},     {"mode", mode}, {"rule", rule},
                {"artifact-depth", artifact_depth}, {"out", out},
                {"checked", checked}};
  }
};

// ---------------------------------------------------------------------------
// theta: the m-good recursion, optional Monte-Carlo check and p0 solve.
// ---------------------------------------------------------------------------

struct ThetaCmd {
  CLI::App* cmd = nullptr;
  ConfigBinder bind;
  std::string config_path;
  int N = 6, M = 50, trials = 0, mc_depth = 4;
  double p = 0.999, tol = 1e-4;
  std::uint64_t seed = 1;
  std::string out = "out";
  bool solve_p0 = false;

  void setup(CLI::App& app) {
    cmd = app.add_subcommand("theta", "iterate the m-good recursion theta_m");
    cmd->add_option("--config", config_path, "JSON config or manifest supplying defaults");
    bind_opt(cmd, bind, "--N", N, "subdivision base");
    bind_opt(cmd, bind, "--p", p, "per-box retention probability");
    bind_opt(cmd, bind, "--M", M, "last iteration index");
    bind_opt(cmd, bind, "--trials", trials, "Monte-Carlo trees (0 = recursion only)");
    bind_opt(cmd, bind, "--mc-depth", mc_depth, "deepest m estimated by Monte Carlo");
    bind_opt(cmd, bind, "--seed", seed, "root seed for the Monte-Carlo trees");
    bind_opt(cmd, bind, "--tol", tol, "bisection tolerance for --solve-p0");
    bind_flag(cmd, bind, "--solve-p0", solve_p0, "bisect the retention threshold");
    bind_opt(cmd, bind, "--out", out, "output directory");
  }

  void run() {
    if (!config_path.empty()) bind.apply(load_config(config_path, "theta"));
    std::vector<std::string> offending;
    if (N < 2) offending.push_back("N");
    if (!(p >= 0.0 && p <= 1.0)) offending.push_back("p");
    if (M < 0) offending.push_back("M");
    if (trials < 0) offending.push_back("trials");
    if (mc_depth < 0) offending.push_back("mc-depth");
    if (!(tol > 0.0 && tol <= 0.1)) offending.push_back("tol");
    require_fields_valid(offending);
    g_seed = seed;

    auto ts = carpetlab::theta_sequence(N, p, M);

    int mc_top = std::min(M, mc_depth);
    std::vector<std::uint64_t> good((std::size_t)mc_top + 1, 0);
    if (trials > 0) {
      auto root = carpetlab::make_box(N, 0, 0, 0);
      for (int t = 0; t < trials; ++t) {
        carpetlab::RetentionConfig rc{N, p, std::max(mc_top, 1),
                                      carpetlab::derive_seed(seed, "theta", t), 12};
        auto tree = carpetlab::RetentionTree::sample(rc);
        auto table = carpetlab::classify_m_good(tree, mc_top);
        for (int m = 0; m <= mc_top; ++m)
          if (table.is_good(root, m)) good[(std::size_t)m] += 1;
      }
    }

    std::string csv = carpetlab::csv_line(
        {"N", "p", "m", "theta_m", "mc_estimate", "mc_stderr", "trials", "seed"});
    for (int m = 0; m <= M; ++m) {
      std::string est, se;
      if (trials > 0 && m <= mc_top) {
        double e = (double)good[(std::size_t)m] / (double)trials;
        est = num(e);
        se = num(std::sqrt(e * (1.0 - e) / (double)trials));
      }
      csv += carpetlab::csv_line({std::to_string(N), num(p), std::to_string(m),
                                  num(ts.values[(std::size_t)m]), est, se,
                                  std::to_string(trials), std::to_string(seed)});
    }
    fs::path dir(out);
    carpetlab::atomic_write_text(dir / "theta.csv", csv);
    std::vector<std::string> outputs{"theta.csv"};

    if (solve_p0) {
      auto th = carpetlab::p0_threshold(N, tol);
      json tj;
      tj["p0"] = th.p0;
      tj["nu"] = th.nu;
      tj["paper_bound"] = th.paper_bound;
      tj["theta_cap"] = th.theta_cap;
      tj["tol"] = tol;
      carpetlab::write_json(dir / "threshold.json", tj);
      outputs.push_back("threshold.json");
      std::cout << "theta: p0(" << N << ") = " << th.p0 << " (tol " << tol
                << "), certified retention bound " << th.paper_bound << "\n";
    }

    carpetlab::write_manifest(dir, "theta", resolved(), outputs);
    std::cout << "theta: N=" << N << " p=" << p << " min theta over m<=" << M << " is "
              << ts.min_value << (ts.min_ge_two_thirds ? " (>= 2/3)" : " (< 2/3)") << "\n";
  }

  json resolved() const {
    return json{{"N", N},         {"p", p},
                {"M", M},         {"trials", trials},
                {"mc-depth", mc_depth},             {"seed", seed},
                {"tol", tol},     {"solve-p0", solve_p0},
                {"out", out}};
  }
};

// ---------------------------------------------------------------------------
// paths: weighted self-avoiding path enumeration over a scale family.
// ---------------------------------------------------------------------------

struct PathsCmd {
  CLI::App* cmd = nullptr;
  ConfigBinder bind;
  std::string config_path, family_path;
  long long rho = 1;
  int N = 8, level = 0, max_len = 3, len_cap = 0;
  long long start_x = 0, start_y = 0;
  int start_level = 0;
  double beta = 5e-5;
  std::uint64_t budget = 10000000;
  std::string out = "out";
  bool collect = false, checked = false;

  void setup(CLI::App& app) {
    cmd = app.add_subcommand("paths", "enumerate and weigh self-avoiding box paths");
    cmd->add_option("--config", config_path, "JSON config or manifest supplying defaults");
    bind_opt(cmd, bind, "--rho", rho, "lattice spacing parameter");
    bind_opt(cmd, bind, "--N", N, "scale base (ignored when --family is given)");
    bind_opt(cmd, bind, "--family", family_path, "planted scale family JSON");
    bind_opt(cmd, bind, "--level", level, "path level k");
    bind_opt(cmd, bind, "--max-len", max_len, "longest enumerated path");
    bind_opt(cmd, bind, "--len-cap", len_cap, "weight sum cap (0 = max-len)");
    bind_opt(cmd, bind, "--beta", beta, "weight scale");
    bind_opt(cmd, bind, "--budget", budget, "DFS node budget");
    bind_opt(cmd, bind, "--start-level", start_level, "start box tier");
    bind_opt(cmd, bind, "--start-x", start_x, "start box center x");
    bind_opt(cmd, bind, "--start-y", start_y, "start box center y");
    bind_flag(cmd, bind, "--collect", collect, "keep paths and check the length bounds");
    bind_opt(cmd, bind, "--out", out, "output directory");
    bind_flag(cmd, bind, "--checked", checked, "run extra postcondition checks");
  }

  void run() {
    if (!config_path.empty()) bind.apply(load_config(config_path, "paths"));
    std::vector<std::string> offending;
    if (rho < 1) offending.push_back("rho");
    if (N < 2) offending.push_back("N");
    if (level < 0) offending.push_back("level");
    if (max_len < 1) offending.push_back("max-len");
    if (len_cap < 0) offending.push_back("len-cap");
    if (!(beta > 0.0)) offending.push_back("beta");
    if (budget < 1) offending.push_back("budget");
    require_fields_valid(offending);
    g_seed.reset();  // deterministic subcommand, no randomness involved

    carpetlab::ScaleFamily fam;
    if (!family_path.empty()) {
      json fj = carpetlab::read_json(family_path);
      if (!fj.contains("rho") || !fj.contains("base") || !fj.contains("sites"))
        carpetlab::fail_validation("malformed-input", "family needs rho, base, sites");
      std::vector<std::vector<std::array<long long, 2>>> sites;
      for (const auto& lv : fj["sites"]) {
        std::vector<std::array<long long, 2>> tier;
        for (const auto& s : lv)
          tier.push_back({s[0].get<long long>(), s[1].get<long long>()});
        sites.push_back(std::move(tier));
      }
      fam = carpetlab::make_family(fj["rho"].get<long long>(), fj["base"].get<int>(),
                                   std::move(sites));
      rho = fam.rho;
      N = fam.base;
    } else {
      fam = carpetlab::make_family(rho, N, {});
    }

    carpetlab::PathBox start{start_level, start_x, start_y};
    auto er = carpetlab::enumerate_paths(start, level, max_len, fam, budget, collect);

    auto adm = carpetlab::admissibility_check(fam, beta);
    int cap = len_cap > 0 ? len_cap : max_len;
    std::optional<carpetlab::WeightSums> ws;
    if (adm.admissible)
      ws = carpetlab::cumulative_weight(start, fam, beta, cap, budget, true);

    std::string csv = carpetlab::csv_line(
        {"k", "L", "count", "s0_fraction_violations", "weight_partial_sum"});
    for (int L = 1; L <= max_len; ++L) {
      std::string w;
      if (ws && L <= cap) w = num(ws->partial[(std::size_t)L]);
      csv += carpetlab::csv_line({std::to_string(level), std::to_string(L),
                                  std::to_string(er.count_per_length[(std::size_t)L]),
                                  std::to_string(er.s0_violations[(std::size_t)L]), w});
    }
    fs::path dir(out);
    carpetlab::atomic_write_text(dir / "paths.csv", csv);

    if (checked)
      for (const auto& pth : er.paths) carpetlab::validate_path(fam, pth);

    json summary;
    summary["rho"] = rho;
    summary["base"] = N;
    summary["k"] = level;
    summary["max_len"] = max_len;
    summary["beta"] = beta;
    summary["admissible"] = adm.admissible;
    summary["worst_neighbor_sum"] = adm.worst_sum;
    summary["worst_box"] =
        json::array({adm.worst_box.level, adm.worst_box.x, adm.worst_box.y});
    summary["enumeration_nodes"] = er.nodes;
    summary["growth_rate"] = er.growth_rate;
    json fr = json::array();
    for (int L = 1; L <= max_len; ++L) fr.push_back(er.min_s0_fraction[(std::size_t)L]);
    summary["min_s0_fraction"] = fr;
    if (ws) {
      summary["total_weight"] = ws->total;
      summary["weight_nodes"] = ws->nodes;
    }
    if (collect) {
      auto lb = carpetlab::check_length_bound(er.paths, level, fam);
      summary["length_bound"] =
          json{{"c_constant", lb.c_constant},
               {"c_bound_applicable", lb.c_bound_applicable},
               {"checked", lb.checked},
               {"vacuous", lb.vacuous},
               {"c_bound_violations", lb.c_bound_violations},
               {"sqrt_violations", lb.sqrt_violations}};
      auto bf = carpetlab::check_box_fraction(er.paths, level, fam, lb.c_constant);
      summary["box_fraction"] = json{{"applicable", bf.applicable},
                                     {"c_constant", bf.c_constant},
                                     {"checked", bf.checked},
                                     {"violations", bf.violations}};
    }
    carpetlab::write_json(dir / "paths_summary.json", summary);

    carpetlab::write_manifest(dir, "paths", resolved(), {"paths.csv", "paths_summary.json"});
    std::cout << "paths: k=" << level << " L<=" << max_len << ", "
              << er.count_per_length[(std::size_t)max_len] << " paths at the cap, "
              << (adm.admissible
                      ? "total weight " + num(ws->total)
                      : std::string("beta inadmissible (worst sum ") + num(adm.worst_sum) + ")")
              << "\n";
  }

  json resolved() const {
    return json{{"rho", rho},
                {"N", N},
                {"family", family_path},
                {"level", level},
                {"max-len", max_len},
                {"len-cap", len_cap},
                {"beta", beta},
                {"budget", budget},
                {"start-level", start_level},
                {"start-x", start_x},
                {"start-y", start_y},
                {"collect", collect},
                {"out", out},
                {"checked", checked}};
  }
};

// ---------------------------------------------------------------------------
// gff: sampling, fluctuation statistics, nice/bad labeling, label harness.
// ---------------------------------------------------------------------------

struct GffCmd {
  CLI::App* cmd = nullptr;
  ConfigBinder bind;
  std::string config_path, labels_path;
  int grid = 33, trials = 200, base = 2, levels = 1, cov_grid = 12, cap = 256, mlevels = 0;
  long long rho = 1, window = 0, harness_r = 100;
  double m_threshold = 1.0, iota = 0.25;
  std::uint64_t seed = 7;
  std::string out = "out";
  bool checked = false;

  void setup(CLI::App& app) {
    cmd = app.add_subcommand("gff", "sample zero-boundary fields and label vertices");
    cmd->add_option("--config", config_path, "JSON config or manifest supplying defaults");
    bind_opt(cmd, bind, "--grid", grid, "interior side length n");
    bind_opt(cmd, bind, "--trials", trials, "independent field samples");
    bind_opt(cmd, bind, "--seed", seed, "root seed");
    bind_opt(cmd, bind, "--N", base, "scale base for the vertex hierarchy");
    bind_opt(cmd, bind, "--rho", rho, "unit scale");
    bind_opt(cmd, bind, "--levels", levels, "hierarchy depth");
    bind_opt(cmd, bind, "--M", m_threshold, "niceness threshold");
    bind_opt(cmd, bind, "--window", window, "fluctuation window radius (0 = grid/8)");
    bind_opt(cmd, bind, "--cov-grid", cov_grid, "grid for the covariance check (0 = skip)");
    bind_opt(cmd, bind, "--cap", cap, "largest allowed grid");
    bind_opt(cmd, bind, "--mlevels", mlevels, "multiscale levels to decompose (0 = skip)");
    bind_opt(cmd, bind, "--labels", labels_path, "run the component harness on this label field");
    bind_opt(cmd, bind, "--iota", iota, "harness diameter fraction");
    bind_opt(cmd, bind, "--R", harness_r, "harness window size");
    bind_opt(cmd, bind, "--out", out, "output directory");
    bind_flag(cmd, bind, "--checked", checked, "run extra postcondition checks");
  }

  void run() {
    if (!config_path.empty()) bind.apply(load_config(config_path, "gff"));
    fs::path dir(out);

    if (!labels_path.empty()) {
      std::vector<std::string> offending;
      if (!(iota > 0.0 && iota <= 1.0)) offending.push_back("iota");
      if (harness_r < 1) offending.push_back("R");
      require_fields_valid(offending);
      g_seed.reset();

      auto lf = carpetlab::labels_from_json(carpetlab::read_json(labels_path));
      std::vector<std::array<long long, 2>> bad;
      for (long long y = 0; y < lf.height; ++y)
        for (long long x = 0; x < lf.width; ++x)
          if (lf.labels[(std::size_t)(y * lf.width + x)]) bad.push_back({x, y});
      auto hr = carpetlab::component_harness(bad, iota, harness_r);

      json hj;
      hj["width"] = lf.width;
      hj["height"] = lf.height;
      hj["bad_count"] = bad.size();
      hj["iota"] = iota;
      hj["R"] = harness_r;
      hj["max_diameter"] = hr.max_diameter;
      hj["pass"] = hr.pass;
      json worst = json::array();
      for (const auto& s : hr.worst_component) worst.push_back(json::array({s[0], s[1]}));
      hj["worst_component"] = worst;
      carpetlab::write_json(dir / "gff_harness.json", hj);
      carpetlab::write_manifest(dir, "gff", resolved(), {"gff_harness.json"});
      std::cout << "gff: harness on " << bad.size() << " bad sites, max diameter "
                << hr.max_diameter << " vs bound " << num(iota * (double)harness_r) << " -> "
                << (hr.pass ? "pass" : "fail") << "\n";
      return;
    }

    std::vector<std::string> offending;
    if (grid < 3) offending.push_back("grid");
    if (trials < 1) offending.push_back("trials");
    if (base < 2) offending.push_back("N");
    if (rho < 1) offending.push_back("rho");
    if (levels < 1) offending.push_back("levels");
    if (!(m_threshold > 0.0)) offending.push_back("M");
    if (window < 0) offending.push_back("window");
    if (cov_grid < 0) offending.push_back("cov-grid");
    if (mlevels < 0) offending.push_back("mlevels");
    require_fields_valid(offending);
    g_seed = seed;
    if (window == 0) window = std::max<long long>(2, grid / 8);

    const int c = grid / 2;
    std::vector<double> fluct;
    fluct.reserve((std::size_t)trials);
    std::vector<double> bad_sum((std::size_t)levels, 0.0);
    std::vector<std::uint64_t> rescued((std::size_t)levels, 0);
    for (int t = 0; t < trials; ++t) {
      auto f = carpetlab::sample_field(grid, carpetlab::derive_seed(seed, "gff", t), cap);
      fluct.push_back(carpetlab::half_window_fluctuation(f, c, c, window));
      auto table = carpetlab::classify_nice(f, base, rho, m_threshold, levels);
      for (int j = 0; j < levels; ++j) {
        bad_sum[(std::size_t)j] += table.bad_fraction[(std::size_t)j];
        if (j > 0) rescued[(std::size_t)j] += (std::uint64_t)table.cover_rescues[(std::size_t)j];
      }
      if (checked && t == 0) {
        auto hs = carpetlab::harmonic_split(f, carpetlab::ball_window(c, c, window));
        double defect = carpetlab::harmonic_defect(hs.harmonic, hs.window.w() + 2,
                                                   hs.window.h() + 2);
        carpetlab::check(defect <= 1e-9, "harmonicity-violated",
                         "window extension defect " + num(defect));
      }
    }

    double max_cov_error = 0.0;
    if (cov_grid > 0) {
      const int s = cov_grid * cov_grid;
      Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(s, s);
      Eigen::VectorXd v(s);
      for (int t = 0; t < trials; ++t) {
        auto f = carpetlab::sample_field(cov_grid, carpetlab::derive_seed(seed, "gffcov", t),
                                         cap);
        for (int i = 0; i < s; ++i) v[i] = f.values[(std::size_t)i];
        acc.selfadjointView<Eigen::Lower>().rankUpdate(v, 1.0);
      }
      Eigen::MatrixXd emp =
          Eigen::MatrixXd(acc.selfadjointView<Eigen::Lower>()) / (double)trials;
      Eigen::MatrixXd exact = carpetlab::green_matrix(cov_grid);
      max_cov_error = (emp - exact).cwiseAbs().maxCoeff();
    }

    auto mv = carpetlab::mean_var(fluct);
    double sigma = std::sqrt(std::max(mv.var, 0.0));
    std::vector<double> xs, ys;
    int tail_points = 0;
    if (sigma > 0) {
      for (double f = 0.5; f <= 3.01; f += 0.5) {
        double thr = mv.mean + f * sigma;
        std::size_t exceed = 0;
        for (double v : fluct)
          if (v > thr) ++exceed;
        if (exceed == 0) break;
        xs.push_back((f * sigma) * (f * sigma));
        ys.push_back(std::log((double)exceed / (double)fluct.size()));
        ++tail_points;
      }
    }
    double tail_fit_c = 0.0, tail_r2 = 0.0;
    if (tail_points >= 2) {
      auto fit = carpetlab::linear_fit(xs, ys);
      tail_r2 = fit.r2;
      if (fit.slope < 0) tail_fit_c = -1.0 / (2.0 * fit.slope);
    }

    std::optional<double> multiscale_error;
    if (mlevels > 0) {
      long long a = rho;
      for (int j = 0; j < mlevels; ++j) a *= base;
      long long zc = a * std::max<long long>(1, (long long)std::llround((double)c / (double)a));
      auto f = carpetlab::sample_field(grid, carpetlab::derive_seed(seed, "gff", 0), cap);
      auto ms = carpetlab::multiscale_decompose(f, (int)zc, (int)zc, rho, base, mlevels);
      multiscale_error = ms.max_error;
    }

    std::vector<std::string> bf;
    for (int j = 0; j < levels; ++j) bf.push_back(num(bad_sum[(std::size_t)j] / trials));
    std::string csv = carpetlab::csv_line({"grid", "window", "trial_count", "max_cov_error",
                                           "tail_fit_C", "bad_fraction_by_level"});
    csv += carpetlab::csv_line({std::to_string(grid), std::to_string(window),
                                std::to_string(trials),
                                cov_grid > 0 ? num(max_cov_error) : std::string(),
                                tail_points >= 2 ? num(tail_fit_c) : std::string(),
                                join(bf, ";")});
    carpetlab::atomic_write_text(dir / "gff.csv", csv);

    json summary;
    summary["grid"] = grid;
    summary["trials"] = trials;
    summary["seed"] = seed;
    summary["base"] = base;
    summary["rho"] = rho;
    summary["levels"] = levels;
    summary["m_threshold"] = m_threshold;
    summary["window"] = window;
    summary["cov_grid"] = cov_grid;
    summary["max_cov_error"] = max_cov_error;
    summary["fluct_mean"] = mv.mean;
    summary["fluct_sigma"] = sigma;
    summary["tail_fit_C"] = tail_fit_c;
    summary["tail_fit_r2"] = tail_r2;
    summary["tail_points"] = tail_points;
    json bfj = json::array();
    for (int j = 0; j < levels; ++j) bfj.push_back(bad_sum[(std::size_t)j] / trials);
    summary["bad_fraction"] = bfj;
    json rj = json::array();
    for (int j = 0; j < levels; ++j) rj.push_back(rescued[(std::size_t)j]);
    summary["cover_rescues"] = rj;
    if (multiscale_error) summary["multiscale_max_error"] = *multiscale_error;
    carpetlab::write_json(dir / "gff_summary.json", summary);

    carpetlab::write_manifest(dir, "gff", resolved(), {"gff.csv", "gff_summary.json"});
    std::cout << "gff: " << trials << " fields on " << grid << "x" << grid
              << ", fluct sigma " << num(sigma) << ", level-1 bad fraction " << bf.front()
              << (cov_grid > 0 ? ", cov error " + num(max_cov_error) : std::string()) << "\n";
  }

  json resolved() const {
    return json{{"grid", grid},       {"trials", trials},   {"seed", seed},
                {"N", base},          {"rho", rho},         {"levels", levels},
                {"M", m_threshold},   {"window", window},   {"cov-grid", cov_grid},
                {"cap", cap},         {"mlevels", mlevels}, {"labels", labels_path},
                {"iota", iota},       {"R", harness_r},     {"out", out},
                {"checked", checked}};
  }
};

// ---------------------------------------------------------------------------
// sle: chordal traces, bubble statistics, kappa sweeps.
// ---------------------------------------------------------------------------

struct SleCmd {
  CLI::App* cmd = nullptr;
  ConfigBinder bind;
  std::string config_path;
  std::vector<double> kappas{2.0};
  double T = 1.0, dt = 1e-3, px = 0.02;
  std::vector<double> window{-2.0, 0.0, 2.0, 4.0};
  int trials = 1, size = 512;
  std::uint64_t seed = 3;
  std::string out = "out";
  bool checked = false;

  void setup(CLI::App& app) {
    cmd = app.add_subcommand("sle", "trace chordal Loewner curves and their bubbles");
    cmd->add_option("--config", config_path, "JSON config or manifest supplying defaults");
    bind_opt(cmd, bind, "--kappa", kappas, "diffusivity (repeat for a sweep)");
    bind_opt(cmd, bind, "--T", T, "capacity horizon");
    bind_opt(cmd, bind, "--dt", dt, "time step");
    bind_opt(cmd, bind, "--seed", seed, "root seed");
    bind_opt(cmd, bind, "--window", window, "raster window x0 y0 x1 y1")->expected(4);
    bind_opt(cmd, bind, "--px", px, "raster pixel size");
    bind_opt(cmd, bind, "--trials", trials, "traces per kappa");
    bind_opt(cmd, bind, "--size", size, "render width in pixels");
    bind_opt(cmd, bind, "--out", out, "output directory");
    bind_flag(cmd, bind, "--checked", checked, "run extra postcondition checks");
  }

  void run() {
    if (!config_path.empty()) bind.apply(load_config(config_path, "sle"));
    std::vector<std::string> offending;
    if (kappas.empty()) offending.push_back("kappa");
    for (double k : kappas)
      if (!(k >= 0.0)) {
        offending.push_back("kappa");
        break;
      }
    if (!(T > 0.0)) offending.push_back("T");
    if (!(dt > 0.0)) offending.push_back("dt");
    if (!(px > 0.0)) offending.push_back("px");
    if (window.size() != 4 || !(window[2] > window[0]) || !(window[3] > window[1]))
      offending.push_back("window");
    if (trials < 1) offending.push_back("trials");
    require_fields_valid(offending);
    g_seed = seed;

    carpetlab::RealRect win{window[0], window[1], window[2], window[3]};
    fs::path dir(out);

    if (kappas.size() == 1 && trials == 1) {
      auto d = carpetlab::sample_driving(kappas[0], T, dt,
                                         carpetlab::derive_seed(seed, "sle", 0));
      auto t = carpetlab::trace(d);
      double cap_est = carpetlab::capacity_estimate(d);
      if (checked)
        carpetlab::check(std::abs(cap_est - 2.0 * T) <= 1e-3 * std::max(1.0, 2.0 * T),
                         "capacity-estimate-off",
                         "half-plane capacity " + num(cap_est) + " vs " + num(2.0 * T));
      carpetlab::write_json(dir / "trace.json", carpetlab::trace_to_json(t));

      std::string csv = carpetlab::csv_line({"step", "t", "re", "im"});
      for (std::size_t i = 0; i < t.tips.size(); ++i)
        csv += carpetlab::csv_line({std::to_string(i + 1), num(dt * (double)(i + 1)),
                                    num(t.tips[i].real()), num(t.tips[i].imag())});
      carpetlab::atomic_write_text(dir / "trace.csv", csv);

      auto bg = carpetlab::bubble_graph(t, win, px);
      std::string bcsv =
          carpetlab::csv_line({"id", "pixels", "diameter", "touches_border", "bulk"});
      for (const auto& b : bg.bubbles)
        bcsv += carpetlab::csv_line({std::to_string(b.id), std::to_string(b.pixels),
                                     std::to_string(b.diameter),
                                     b.touches_border ? "1" : "0",
                                     b.touches_border ? "0" : "1"});
      carpetlab::atomic_write_text(dir / "bubbles.csv", bcsv);

      auto scene = carpetlab::trace_scene(t);
      auto img = carpetlab::render_scene(scene, size);
      carpetlab::atomic_write_bytes(dir / "trace.png",
                                    carpetlab::png_encode(img, carpetlab::legend_text(scene)));

      std::size_t bulk = 0;
      for (const auto& b : bg.bubbles)
        if (!b.touches_border) ++bulk;
      json summary;
      summary["kappa"] = kappas[0];
      summary["T"] = T;
      summary["dt"] = dt;
      summary["seed"] = seed;
      summary["steps"] = d.steps();
      summary["tip"] = json::array({t.tips.back().real(), t.tips.back().imag()});
      summary["capacity_estimate"] = cap_est;
      summary["capacity_expected"] = 2.0 * T;
      summary["bubbles"] = bg.bubbles.size();
      summary["bulk_bubbles"] = bulk;
      summary["adjacency_edges"] = bg.edges.size();
      summary["connected"] = bg.connected;
      carpetlab::write_json(dir / "sle_summary.json", summary);

      carpetlab::write_manifest(
          dir, "sle", resolved(),
          {"trace.json", "trace.csv", "bubbles.csv", "trace.png", "sle_summary.json"});
      std::cout << "sle: kappa=" << kappas[0] << " T=" << T << " dt=" << dt << ", "
                << bg.bubbles.size() << " bubbles (" << bulk << " bulk), capacity "
                << num(cap_est) << "\n";
      return;
    }

    auto rows = carpetlab::kappa_sweep(kappas, trials, T, dt, win, px, seed);
    std::string csv = carpetlab::csv_line(
        {"kappa", "trials", "bulk_bubbles", "q50", "q90", "q99", "connected_fraction"});
    json rj = json::array();
    for (const auto& r : rows) {
      csv += carpetlab::csv_line({num(r.kappa), std::to_string(trials),
                                  std::to_string(r.bulk_diameters.size()), num(r.q50),
                                  num(r.q90), num(r.q99), num(r.connected_fraction)});
      rj.push_back(json{{"kappa", r.kappa},
                        {"bulk_bubbles", r.bulk_diameters.size()},
                        {"q50", r.q50},
                        {"q90", r.q90},
                        {"q99", r.q99},
                        {"connected_fraction", r.connected_fraction}});
    }
    carpetlab::atomic_write_text(dir / "sweep.csv", csv);
    json summary;
    summary["kappas"] = kappas;
    summary["trials"] = trials;
    summary["T"] = T;
    summary["dt"] = dt;
    summary["seed"] = seed;
    summary["rows"] = rj;
    carpetlab::write_json(dir / "sle_summary.json", summary);
    carpetlab::write_manifest(dir, "sle", resolved(), {"sweep.csv", "sle_summary.json"});
    std::cout << "sle: swept " << kappas.size() << " kappa values x " << trials
              << " trials\n";
  }

  json resolved() const {
    return json{{"kappa", kappas}, {"T", T},           {"dt", dt},
                {"seed", seed},    {"window", window}, {"px", px},
                {"trials", trials}, {"size", size},    {"out", out},
                {"checked", checked}};
  }
};

// ---------------------------------------------------------------------------
// render: artifact JSON in, PNG or SVG out.
// ---------------------------------------------------------------------------

struct RenderCmd {
  CLI::App* cmd = nullptr;
  ConfigBinder bind;
  std::string config_path, in, out_file;
  int size = 512, render_depth = 0;

  void setup(CLI::App& app) {
    cmd = app.add_subcommand("render", "render a serialized artifact to PNG or SVG");
    cmd->add_option("--config", config_path, "JSON config or manifest supplying defaults");
    bind_opt(cmd, bind, "--in", in, "artifact JSON file");
    bind_opt(cmd, bind, "--out", out_file, "output image (.png or .svg)");
    bind_opt(cmd, bind, "--size", size, "image width in pixels");
    bind_opt(cmd, bind, "--render-depth", render_depth, "cap the drawn carpet level (0 = all)");
  }

  void run() {
    if (!config_path.empty()) bind.apply(load_config(config_path, "render"));
    std::vector<std::string> offending;
    if (in.empty()) offending.push_back("in");
    if (out_file.empty()) offending.push_back("out");
    if (render_depth < 0) offending.push_back("render-depth");
    require_fields_valid(offending);
    g_seed.reset();

    json j = carpetlab::read_json(in);
    std::string type = j.is_object() && j.contains("type") && j["type"].is_string()
                           ? j["type"].get<std::string>()
                           : std::string("?");
    carpetlab::Scene scene;
    if (type == "carpet") {
      auto c = carpetlab::carpet_from_json(j);
      if (render_depth > 0 && c.depth > render_depth) {
        c.depth = render_depth;
        auto clip = [&](auto& v) {
          if ((int)v.size() > render_depth + 1) v.resize((std::size_t)render_depth + 1);
        };
        clip(c.dagger);
        clip(c.star_kept);
        clip(c.kept_count);
        clip(c.star_trimmed);
        clip(c.star_area);
      }
      scene = carpetlab::carpet_scene(c);
    } else if (type == "clusters") {
      scene = carpetlab::cluster_scene(carpetlab::clusters_from_json(j));
    } else if (type == "trace") {
      scene = carpetlab::trace_scene(carpetlab::trace_from_json(j));
    } else {
      carpetlab::fail_validation("unrenderable", "unknown artifact type '" + type + "'");
    }

    fs::path target(out_file);
    std::string ext = target.extension().string();
    if (ext == ".png") {
      auto img = carpetlab::render_scene(scene, size);
      carpetlab::atomic_write_bytes(target,
                                    carpetlab::png_encode(img, carpetlab::legend_text(scene)));
    } else if (ext == ".svg") {
      carpetlab::atomic_write_text(target, carpetlab::render_svg(scene, size));
    } else {
      carpetlab::fail_validation("unrenderable", "output must end in .png or .svg");
    }

    fs::path dir = target.has_parent_path() ? target.parent_path() : fs::path(".");
    carpetlab::write_manifest(dir, "render", resolved(), {target.filename().string()});
    std::cout << "render: " << type << " -> " << out_file << " (" << scene.rects.size()
              << " rects)\n";
  }

  json resolved() const {
    return json{{"in", in}, {"out", out_file}, {"size", size}, {"render-depth", render_depth}};
  }
};

int exit_code(carpetlab::errc kind) {
  switch (kind) {
    case carpetlab::errc::validation: return 2;
    case carpetlab::errc::invariant: return 3;
    case carpetlab::errc::budget: return 4;
  }
  return 3;
}

void report_error(const std::string& kind, const std::string& code, const std::string& detail) {
  json r;
  r["error"] = json{{"kind", kind}, {"code", code}, {"detail", detail}};
  if (g_seed) r["error"]["seed"] = *g_seed;
  std::cerr << r.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"carpetlab: fractal percolation carpets, path weights, field labels, traces"};
  app.require_subcommand(1);
  app.set_version_flag("--version", carpetlab::kArtifactVersion);

  PercolateCmd percolate;
  CarpetCmd carpet;
  ThetaCmd theta;
  PathsCmd paths;
  GffCmd gff;
  SleCmd sle;
  RenderCmd render;
  percolate.setup(app);
  carpet.setup(app);
  theta.setup(app);
  paths.setup(app);
  gff.setup(app);
  sle.setup(app);
  render.setup(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (percolate.cmd->parsed()) percolate.run();
    else if (carpet.cmd->parsed()) carpet.run();
    else if (theta.cmd->parsed()) theta.run();
    else if (paths.cmd->parsed()) paths.run();
    else if (gff.cmd->parsed()) gff.run();
    else if (sle.cmd->parsed()) sle.run();
    else if (render.cmd->parsed()) render.run();
    return 0;
  } catch (const carpetlab::error& e) {
    const char* kind = e.kind() == carpetlab::errc::validation ? "validation"
                       : e.kind() == carpetlab::errc::budget   ? "budget"
                                                               : "invariant";
    report_error(kind, e.code(), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    report_error("invariant", "internal-error", e.what());
    return 3;
  }
}
