#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cfine/checkpoint.hpp"
#include "cfine/config.hpp"
#include "cfine/diagnostics.hpp"
#include "cfine/errors.hpp"
#include "cfine/retrieval.hpp"
#include "cfine/synth_data.hpp"
#include "cfine/trainer.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::uint64_t seed = 42;
  std::string data;
  std::string checkpoint;
  std::string out;
  std::size_t top_k = 5;
};

cfine::TrainConfig load_or_default(const std::string& path) {
  return path.empty() ? cfine::TrainConfig{} : cfine::load_config(path);
}

int cmd_gen_data(const CommonFlags& f) {
  const auto cfg = load_or_default(f.config);
  cfg.validate();
  const auto corpus = cfine::generate(cfg.n_ids, cfg.pairs_per_id, cfg.noise_sigma, f.seed, cfg.model);
  cfine::save_corpus(corpus, f.out);
  std::cout << "wrote " << corpus.pairs.size() << " pairs (" << corpus.n_ids << " identities) to " << f.out << '\n';
  return 0;
}

int cmd_train(const CommonFlags& f, std::optional<std::uint64_t> max_steps, const std::string& metrics_path) {
  const auto cfg = load_or_default(f.config);
  const auto corpus = cfine::load_corpus(f.data);

  std::ofstream metrics_file;
  cfine::TrainOptions opts;
  opts.max_steps = max_steps;
  if (!metrics_path.empty()) {
    metrics_file.open(metrics_path);
    if (!metrics_file) throw cfine::Error("cannot open " + metrics_path + " for writing");
    opts.log = &metrics_file;
  } else {
    opts.log = &std::cout;
  }

  const auto result = cfine::train(corpus, cfg, f.seed, opts);
  cfine::save_checkpoint(result.state.checkpoint(), f.out);
  std::cerr << "trained " << result.step_losses.size() << " steps, checkpoint written to " << f.out << '\n';
  return 0;
}

int cmd_eval(const CommonFlags& f, bool low_only) {
  const auto model = cfine::model_from_checkpoint(cfine::load_checkpoint(f.checkpoint));
  const auto corpus = cfine::load_corpus(f.data);
  const auto mode = low_only ? cfine::InferenceMode::kLowOnly : cfine::InferenceMode::kAllGrains;
  const auto r = cfine::evaluate(model, corpus, mode);
  std::printf("rank1\t%.2f\nrank5\t%.2f\nrank10\t%.2f\n", r.rank1, r.rank5, r.rank10);
  return 0;
}

int cmd_retrieve(const CommonFlags& f, bool low_only) {
  const auto model = cfine::model_from_checkpoint(cfine::load_checkpoint(f.checkpoint));
  const auto corpus = cfine::load_corpus(f.data);
  const auto mode = low_only ? cfine::InferenceMode::kLowOnly : cfine::InferenceMode::kAllGrains;
  const auto feats = cfine::extract_features(model, corpus);
  const auto scores = cfine::similarity_matrix(feats, mode);
  const auto r = cfine::rank_gallery(scores, feats.labels, feats.labels);

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!f.out.empty()) {
    file.open(f.out);
    if (!file) throw cfine::Error("cannot open " + f.out + " for writing");
    os = &file;
  }
  for (std::size_t q = 0; q < r.ranked.size(); ++q) {
    *os << "query " << q << " (id " << feats.labels[q] << "):";
    const std::size_t k = std::min(f.top_k, r.ranked[q].size());
    for (std::size_t i = 0; i < k; ++i) {
      const auto g = r.ranked[q][i];
      char buf[64];
      std::snprintf(buf, sizeof buf, " %zu[id %u]=%.6f", g, feats.labels[g], scores[q][g]);
      *os << buf;
    }
    *os << '\n';
  }
  return 0;
}

int cmd_gradcheck(const CommonFlags& f, double tol, double h) {
  auto cfg = cfine::small_gradcheck_config();
  if (!f.config.empty()) cfg = cfine::load_config(f.config).model;
  cfine::GradCheckOptions opts;
  opts.tol = tol;
  opts.h = h;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = cfine::check_loss_gradients(cfg, f.seed, opts);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("checked %zu coordinates in %.1f s\nmax relative error %.3e (worst index %zu)\nmax absolute error %.3e\n",
              r.checked, secs, r.max_rel_error, r.worst_index, r.max_abs_error);
  if (r.unreliable) std::printf("non-smooth at %zu coordinates\n", r.unreliable_indices.size());
  std::printf("%s\n", r.passed ? "PASS" : "FAIL");
  return r.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-grained text-to-image alignment at toy scale"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "key = value config file");
    sub->add_option("--seed", flags.seed, "random seed");
  };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  add_common(gen);
  gen->add_option("--out", flags.out, "corpus output path")->required();

  std::optional<std::uint64_t> max_steps;
  std::string metrics_path;
  auto* train = app.add_subcommand("train", "train a model on a corpus");
  add_common(train);
  train->add_option("--data", flags.data, "corpus file")->required();
  train->add_option("--out", flags.out, "checkpoint output path")->required();
  train->add_option("--max-steps", max_steps, "stop after this many optimizer steps");
  train->add_option("--metrics", metrics_path, "write per-epoch metrics here instead of stdout");

  bool low_only = false;
  auto* eval = app.add_subcommand("eval", "Rank-1/5/10 of text queries against the corpus images");
  eval->add_option("--checkpoint", flags.checkpoint, "checkpoint file")->required();
  eval->add_option("--data", flags.data, "corpus file")->required();
  eval->add_flag("--low-only", low_only, "score with the encoder global feature alone");

  auto* retrieve = app.add_subcommand("retrieve", "print the top-k gallery images per text query");
  retrieve->add_option("--checkpoint", flags.checkpoint, "checkpoint file")->required();
  retrieve->add_option("--data", flags.data, "corpus file")->required();
  retrieve->add_option("--top-k", flags.top_k, "gallery items per query")->check(CLI::PositiveNumber);
  retrieve->add_option("--out", flags.out, "write results here instead of stdout");
  retrieve->add_flag("--low-only", low_only, "score with the encoder global feature alone");

  double tol = 1e-3;
  double h = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the full loss");
  add_common(gradcheck);
  gradcheck->add_option("--tol", tol, "maximum relative error");
  gradcheck->add_option("--step", h, "finite-difference step");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen_data(flags);
    if (*train) return cmd_train(flags, max_steps, metrics_path);
    if (*eval) return cmd_eval(flags, low_only);
    if (*retrieve) return cmd_retrieve(flags, low_only);
    if (*gradcheck) return cmd_gradcheck(flags, tol, h);
  } catch (const cfine::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
