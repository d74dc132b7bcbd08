#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "densematch/contrastive_loss.hpp"
#include "densematch/dfg_io.hpp"
#include "densematch/errors.hpp"
#include "densematch/feature_grid.hpp"
#include "densematch/matchers.hpp"
#include "densematch/serialization.hpp"
#include "densematch/synth_bench.hpp"
#include "densematch/view_geometry.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitCheck = 3;

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  if (!s.empty() && s.back() == ',') out.push_back("");
  return out;
}

std::vector<double> parse_real_list(const std::string& s,
                                    const std::string& flag) {
  std::vector<double> out;
  for (const auto& tok : split_commas(s)) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(tok, &pos);
      if (pos != tok.size()) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::exception&) {
      throw std::invalid_argument(flag + ": bad value '" + tok + "'");
    }
  }
  if (out.empty()) throw std::invalid_argument(flag + ": empty list");
  return out;
}

densematch::ViewTransform parse_transform(const std::string& s,
                                          const std::string& flag) {
  const auto toks = split_commas(s);
  if (toks.size() != 4 && toks.size() != 5) {
    throw std::invalid_argument(flag + ": expected x0,y0,w,h[,flip]");
  }
  double vals[4];
  for (int i = 0; i < 4; ++i) {
    try {
      std::size_t pos = 0;
      vals[i] = std::stod(toks[static_cast<std::size_t>(i)], &pos);
      if (pos != toks[static_cast<std::size_t>(i)].size()) {
        throw std::invalid_argument(toks[static_cast<std::size_t>(i)]);
      }
    } catch (const std::exception&) {
      throw std::invalid_argument(flag + ": bad value '" +
                                  toks[static_cast<std::size_t>(i)] + "'");
    }
  }
  bool flip = false;
  if (toks.size() == 5) {
    if (toks[4] == "1") {
      flip = true;
    } else if (toks[4] != "0") {
      throw std::invalid_argument(flag + ": flip must be 0 or 1");
    }
  }
  densematch::ViewTransform t{vals[0], vals[1], vals[2], vals[3], flip};
  t.validate();
  return t;
}

struct HoughFlags {
  double bin = 1.0;
  double exponent = 2.0;
  int smoothing = 0;
  int top_k = 0;  // <= 0 means all
  double min_sim = -1.0;

  densematch::HoughConfig to_config() const {
    densematch::HoughConfig cfg;
    cfg.bin_width = bin;
    cfg.vote_exponent = exponent;
    cfg.smoothing_radius = smoothing;
    cfg.top_k = top_k <= 0 ? densematch::HoughConfig::kAllKeys : top_k;
    cfg.min_similarity = min_sim;
    cfg.validate();
    return cfg;
  }
};

void add_hough_flags(CLI::App* cmd, HoughFlags& f) {
  cmd->add_option("--hough-bin", f.bin, "Hough bin width in cell units")
      ->capture_default_str();
  cmd->add_option("--hough-exponent", f.exponent, "vote weight exponent p")
      ->capture_default_str();
  cmd->add_option("--hough-smoothing", f.smoothing,
                  "vote smoothing radius in bins")
      ->capture_default_str();
  cmd->add_option("--hough-top-k", f.top_k,
                  "votes per query (0 = all keys)")
      ->capture_default_str();
  cmd->add_option("--hough-min-sim", f.min_sim,
                  "minimum similarity for a vote")
      ->capture_default_str();
}

densematch::FeatureGrid read_features_or_throw(const std::string& path) {
  return densematch::read_dfg_file(path);
}

std::vector<std::vector<double>> negatives_from_grid(
    const densematch::FeatureGrid& g, bool normalize) {
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<std::size_t>(g.cells()));
  for (int i = 0; i < g.cells(); ++i) {
    const auto c = g.cell(i);
    std::vector<double> v(c.begin(), c.end());
    if (normalize) {
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > densematch::kZeroNormThreshold) {
        for (double& x : v) x /= norm;
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<double> normalized_pool(const densematch::FeatureGrid& g) {
  std::vector<double> v = densematch::global_pool(g);
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > densematch::kZeroNormThreshold) {
    for (double& x : v) x /= norm;
  }
  return v;
}

// ---- bench ----

struct BenchFlags {
  std::string matchers = "argmax,hough";
  int seeds = 1;
  int grid_size = 7;
  int dim = 32;
  int latent_scale = 4;
  std::string outlier = "0";
  std::string clutter = "0";
  std::string noise = "0";
  double min_overlap = 0.3;
  double scale_min = 0.4;
  double scale_max = 0.8;
  double flip_prob = 0.0;
  int clutter_pool = 4;
  int epsilon = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string json_out;
  HoughFlags hough;
  double warped_radius = 1.5;
};

int cmd_bench(const BenchFlags& f) {
  densematch::ExperimentSpec spec;
  spec.grid_size = f.grid_size;
  spec.dim = f.dim;
  spec.latent_scale = f.latent_scale;
  spec.min_overlap = f.min_overlap;
  spec.scale_range = {f.scale_min, f.scale_max};
  spec.flip_prob = f.flip_prob;
  spec.clutter_pool = f.clutter_pool;
  spec.epsilon = f.epsilon;
  spec.num_seeds = f.seeds;
  spec.master_seed = f.seed;

  std::vector<std::string> matcher_names;
  for (const auto& name : split_commas(f.matchers)) {
    densematch::MatcherParams p;
    p.kind = densematch::matcher_kind_from_name(name);
    p.hough = f.hough.to_config();
    p.warped_radius = f.warped_radius;
    spec.matchers.push_back(p);
    matcher_names.push_back(name);
  }
  for (double o : parse_real_list(f.outlier, "--outlier-frac")) {
    for (double c : parse_real_list(f.clutter, "--clutter-frac")) {
      for (double n : parse_real_list(f.noise, "--noise")) {
        spec.configs.push_back(densematch::DataConfig{o, c, n});
      }
    }
  }
  spec.validate();

  const densematch::ExperimentResult result = densematch::run_experiment(spec);
  if (result.records.empty()) {
    std::cerr << "bench: every trial failed to generate\n";
    return kExitCheck;
  }

  std::vector<std::pair<std::string, std::string>> params;
  params.emplace_back("grid_size", std::to_string(f.grid_size));
  params.emplace_back("dim", std::to_string(f.dim));
  params.emplace_back("latent_scale", std::to_string(f.latent_scale));
  params.emplace_back("min_overlap", densematch::format_real(f.min_overlap));
  params.emplace_back("scale_min", densematch::format_real(f.scale_min));
  params.emplace_back("scale_max", densematch::format_real(f.scale_max));
  params.emplace_back("flip_prob", densematch::format_real(f.flip_prob));
  params.emplace_back("clutter_pool", std::to_string(f.clutter_pool));
  params.emplace_back("epsilon", std::to_string(f.epsilon));
  params.emplace_back("seeds", std::to_string(f.seeds));
  params.emplace_back("seed", std::to_string(f.seed));
  params.emplace_back("matchers", f.matchers);
  params.emplace_back("outlier_frac", f.outlier);
  params.emplace_back("clutter_frac", f.clutter);
  params.emplace_back("noise_sigma", f.noise);
  params.emplace_back("hough_bin", densematch::format_real(f.hough.bin));
  params.emplace_back("hough_exponent",
                      densematch::format_real(f.hough.exponent));
  params.emplace_back("hough_smoothing", std::to_string(f.hough.smoothing));
  params.emplace_back("hough_top_k",
                      f.hough.top_k <= 0 ? std::string("all")
                                         : std::to_string(f.hough.top_k));
  params.emplace_back("hough_min_sim",
                      densematch::format_real(f.hough.min_sim));
  params.emplace_back("warped_radius",
                      densematch::format_real(f.warped_radius));

  {
    std::ofstream os(f.out, std::ios::binary);
    if (!os) {
      std::cerr << "bench: cannot open " << f.out << " for writing\n";
      return kExitIo;
    }
    densematch::write_bench_csv(os, params, result.records);
    if (!os) {
      std::cerr << "bench: write failed on " << f.out << "\n";
      return kExitIo;
    }
  }
  if (!f.json_out.empty()) {
    std::ofstream os(f.json_out, std::ios::binary);
    if (!os) {
      std::cerr << "bench: cannot open " << f.json_out << " for writing\n";
      return kExitIo;
    }
    os << densematch::bench_to_json(params, result.records).dump(2) << "\n";
    if (!os) {
      std::cerr << "bench: write failed on " << f.json_out << "\n";
      return kExitIo;
    }
  }

  for (const auto& name : matcher_names) {
    double sum = 0.0;
    int count = 0;
    for (const auto& r : result.records) {
      if (r.matcher == name) {
        sum += r.accuracy;
        ++count;
      }
    }
    std::cout << name << " mean_accuracy="
              << densematch::format_real(count ? sum / count : 0.0) << "\n";
  }
  if (result.skipped > 0) {
    std::cout << "skipped=" << result.skipped << "\n";
  }
  return kExitOk;
}

// ---- match ----

struct MatchFlags {
  std::string features_a;
  std::string features_b;
  std::string matcher = "argmax";
  std::string out;
  std::string t1;
  std::string t2;
  HoughFlags hough;
  double warped_radius = 1.5;
};

int cmd_match(const MatchFlags& f) {
  const densematch::MatcherKind kind =
      densematch::matcher_kind_from_name(f.matcher);
  densematch::ViewTransform t1 = densematch::ViewTransform::identity();
  densematch::ViewTransform t2 = densematch::ViewTransform::identity();
  if (kind == densematch::MatcherKind::kWarped) {
    if (f.t1.empty() || f.t2.empty()) {
      throw std::invalid_argument("matcher warped requires --t1 and --t2");
    }
    t1 = parse_transform(f.t1, "--t1");
    t2 = parse_transform(f.t2, "--t2");
  }
  const densematch::HoughConfig cfg = f.hough.to_config();

  const densematch::FeatureGrid a = read_features_or_throw(f.features_a);
  const densematch::FeatureGrid b = read_features_or_throw(f.features_b);
  if (a.dim() != b.dim()) {
    std::cerr << "match: feature dimension mismatch (" << a.dim() << " vs "
              << b.dim() << ")\n";
    return kExitCheck;
  }
  if (a.height() != b.height() || a.width() != b.width()) {
    std::cerr << "match: grid shape mismatch\n";
    return kExitCheck;
  }

  const densematch::SimilarityMatrix delta = densematch::similarity_matrix(a, b);
  densematch::MatcherParams params;
  params.kind = kind;
  params.hough = cfg;
  params.warped_radius = f.warped_radius;
  const densematch::CorrespondenceMap corr = densematch::run_matcher(
      params, t1, t2, a.height(), a.width(), delta);

  std::ofstream os(f.out, std::ios::binary);
  if (!os) {
    std::cerr << "match: cannot open " << f.out << " for writing\n";
    return kExitIo;
  }
  os << densematch::matches_to_json(corr, a.height(), a.width(), f.matcher)
            .dump(2)
     << "\n";
  if (!os) {
    std::cerr << "match: write failed on " << f.out << "\n";
    return kExitIo;
  }
  return kExitOk;
}

// ---- losscheck / gradcheck ----

struct LossFlags {
  std::string features_a;
  std::string features_b;
  std::string negatives;
  std::string corr = "argmax";
  std::string corr_file;
  double tau = 0.2;
  double lambda = 0.5;
  bool global = false;
  HoughFlags hough;
  double fd_eps = 1e-5;
  double threshold = 1e-5;
};

struct LossInputs {
  densematch::FeatureGrid queries{1, 1, 1};
  densematch::FeatureGrid keys{1, 1, 1};
  std::vector<std::vector<double>> negatives;
  densematch::CorrespondenceMap corr{1, 1};
};

LossInputs load_loss_inputs(const LossFlags& f) {
  if (f.corr != "argmax" && f.corr != "hough" && f.corr != "file") {
    throw std::invalid_argument("--corr must be argmax, hough, or file");
  }
  if (f.corr == "file" && f.corr_file.empty()) {
    throw std::invalid_argument("--corr file requires --corr-file");
  }
  if (!(f.tau > 0.0)) {
    throw std::invalid_argument("--tau must be positive");
  }
  if (!(f.lambda >= 0.0 && f.lambda <= 1.0)) {
    throw std::invalid_argument("--lambda must lie in [0,1]");
  }
  const densematch::HoughConfig cfg = f.hough.to_config();

  LossInputs in;
  in.queries = read_features_or_throw(f.features_a);
  in.keys = read_features_or_throw(f.features_b);
  const densematch::FeatureGrid neg = read_features_or_throw(f.negatives);
  if (in.queries.dim() != in.keys.dim() || in.queries.dim() != neg.dim()) {
    throw densematch::DegenerateInputError(
        "losscheck: feature dimension mismatch across inputs");
  }
  if (in.queries.height() != in.keys.height() ||
      in.queries.width() != in.keys.width()) {
    throw densematch::DegenerateInputError(
        "losscheck: query and key grids must share a shape");
  }
  in.queries.l2_normalize();
  in.keys.l2_normalize();
  in.negatives = negatives_from_grid(neg, true);

  if (f.corr == "file") {
    std::ifstream is(f.corr_file, std::ios::binary);
    if (!is) {
      throw densematch::IoError("cannot open for reading: " + f.corr_file);
    }
    nlohmann::json j;
    is >> j;
    const densematch::MatchFile mf = densematch::matches_from_json(j);
    if (mf.s_h != in.queries.height() || mf.s_w != in.queries.width()) {
      throw densematch::DegenerateInputError(
          "losscheck: correspondence grid shape mismatch");
    }
    in.corr = mf.corr;
  } else {
    const densematch::SimilarityMatrix delta =
        densematch::similarity_matrix(in.queries, in.keys);
    in.corr = f.corr == "argmax"
                  ? densematch::argmax_match(delta)
                  : densematch::hough_match(delta, in.queries.height(),
                                            in.queries.width(), cfg);
  }
  return in;
}

void print_loss_params(const LossFlags& f) {
  std::cout << "# tau=" << densematch::format_real(f.tau)
            << " lambda=" << densematch::format_real(f.lambda)
            << " corr=" << f.corr << "\n";
}

int cmd_losscheck(const LossFlags& f) {
  const LossInputs in = load_loss_inputs(f);
  const densematch::DenseLossResult dense = densematch::dense_contrastive_loss(
      in.queries, in.keys, in.corr, in.negatives, f.tau);
  print_loss_params(f);
  std::cout << "L_r=" << densematch::format_real(dense.mean) << "\n";
  std::cout << "matched=" << dense.matched_count << "\n";
  if (f.global) {
    const double l_q = densematch::global_contrastive_loss(
        normalized_pool(in.queries), normalized_pool(in.keys), in.negatives,
        f.tau);
    const densematch::LossTerms terms =
        densematch::make_loss_terms(l_q, dense, f.lambda, f.tau);
    std::cout << "L_q=" << densematch::format_real(terms.l_q) << "\n";
    std::cout << "total=" << densematch::format_real(terms.total) << "\n";
  }
  return kExitOk;
}

int cmd_gradcheck(const LossFlags& f) {
  if (!(f.fd_eps > 0.0)) {
    throw std::invalid_argument("--fd-eps must be positive");
  }
  if (!(f.threshold > 0.0)) {
    throw std::invalid_argument("--threshold must be positive");
  }
  const LossInputs in = load_loss_inputs(f);
  const double err = densematch::dense_loss_grad_check(
      in.queries, in.keys, in.corr, in.negatives, f.tau, f.fd_eps);
  print_loss_params(f);
  std::cout << "max_rel_err=" << densematch::format_real(err) << "\n";
  std::cout << "threshold=" << densematch::format_real(f.threshold) << "\n";
  if (!(err <= f.threshold)) {
    std::cerr << "gradcheck: max relative error exceeds threshold\n";
    return kExitCheck;
  }
  return kExitOk;
}

template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const densematch::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const densematch::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const densematch::DegenerateInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheck;
  } catch (const densematch::GenerationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheck;
  } catch (const densematch::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheck;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheck;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dense correspondence matching, contrastive loss checks, and "
               "a synthetic robustness benchmark"};
  app.require_subcommand(1);

  BenchFlags bf;
  CLI::App* bench = app.add_subcommand(
      "bench", "run the synthetic matcher benchmark grid");
  bench->add_option("--matchers", bf.matchers,
                    "comma list of matchers (argmax, hough, warped)")
      ->capture_default_str();
  bench->add_option("--seeds", bf.seeds, "trials per configuration")
      ->capture_default_str();
  bench->add_option("--grid-size", bf.grid_size, "view grid side S")
      ->capture_default_str();
  bench->add_option("--dim", bf.dim, "feature dimension E")
      ->capture_default_str();
  bench->add_option("--latent-scale", bf.latent_scale,
                    "latent cells per view cell")
      ->capture_default_str();
  bench->add_option("--outlier-frac", bf.outlier,
                    "comma list of outlier fractions")
      ->capture_default_str();
  bench->add_option("--clutter-frac", bf.clutter,
                    "comma list of clutter fractions")
      ->capture_default_str();
  bench->add_option("--noise", bf.noise, "comma list of noise sigmas")
      ->capture_default_str();
  bench->add_option("--min-overlap", bf.min_overlap,
                    "minimum crop IoU when sampling view pairs")
      ->capture_default_str();
  bench->add_option("--scale-min", bf.scale_min, "minimum crop side")
      ->capture_default_str();
  bench->add_option("--scale-max", bf.scale_max, "maximum crop side")
      ->capture_default_str();
  bench->add_option("--flip-prob", bf.flip_prob,
                    "horizontal flip probability per view")
      ->capture_default_str();
  bench->add_option("--clutter-pool", bf.clutter_pool,
                    "number of shared distractor vectors")
      ->capture_default_str();
  bench->add_option("--epsilon", bf.epsilon,
                    "accuracy tolerance in cells (Chebyshev)")
      ->capture_default_str();
  bench->add_option("--seed", bf.seed, "master seed")->capture_default_str();
  bench->add_option("--out", bf.out, "CSV output path")->required();
  bench->add_option("--json-out", bf.json_out, "optional JSON output path");
  add_hough_flags(bench, bf.hough);
  bench->add_option("--warped-radius", bf.warped_radius,
                    "radius for the warped matcher, view-2 cell units")
      ->capture_default_str();

  MatchFlags mf;
  CLI::App* match = app.add_subcommand(
      "match", "match two feature files and write match JSON");
  match->add_option("--features-a", mf.features_a, "query DFG file")
      ->required();
  match->add_option("--features-b", mf.features_b, "key DFG file")->required();
  match->add_option("--matcher", mf.matcher, "argmax, hough, or warped")
      ->capture_default_str();
  match->add_option("--out", mf.out, "match JSON output path")->required();
  match->add_option("--t1", mf.t1,
                    "view-1 crop x0,y0,w,h[,flip] (warped matcher)");
  match->add_option("--t2", mf.t2,
                    "view-2 crop x0,y0,w,h[,flip] (warped matcher)");
  add_hough_flags(match, mf.hough);
  match->add_option("--warped-radius", mf.warped_radius,
                    "radius for the warped matcher, view-2 cell units")
      ->capture_default_str();

  auto add_loss_flags = [](CLI::App* cmd, LossFlags& f) {
    cmd->add_option("--features-a", f.features_a, "query DFG file")
        ->required();
    cmd->add_option("--features-b", f.features_b, "key DFG file")->required();
    cmd->add_option("--negatives", f.negatives,
                    "DFG file whose cells are the negative vectors")
        ->required();
    cmd->add_option("--corr", f.corr,
                    "correspondence source: argmax, hough, or file")
        ->capture_default_str();
    cmd->add_option("--corr-file", f.corr_file,
                    "match JSON path when --corr file");
    cmd->add_option("--tau", f.tau, "temperature")->capture_default_str();
    cmd->add_option("--lambda", f.lambda, "dense loss weight")
        ->capture_default_str();
    add_hough_flags(cmd, f.hough);
  };

  LossFlags lf;
  CLI::App* losscheck = app.add_subcommand(
      "losscheck", "compute the dense loss (and optionally the global blend)");
  add_loss_flags(losscheck, lf);
  losscheck->add_flag("--global", lf.global,
                      "also report the pooled global loss and the blend");

  LossFlags gf;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference check of the dense loss gradient");
  add_loss_flags(gradcheck, gf);
  gradcheck->add_option("--fd-eps", gf.fd_eps, "finite difference step")
      ->capture_default_str();
  gradcheck->add_option("--threshold", gf.threshold,
                        "maximum accepted relative error")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    app.exit(e);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (bench->parsed()) return guarded([&] { return cmd_bench(bf); });
  if (match->parsed()) return guarded([&] { return cmd_match(mf); });
  if (losscheck->parsed()) return guarded([&] { return cmd_losscheck(lf); });
  if (gradcheck->parsed()) return guarded([&] { return cmd_gradcheck(gf); });
  return kExitUsage;
}
