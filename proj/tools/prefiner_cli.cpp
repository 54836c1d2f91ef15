// prefiner: decompose, refine, gen-data, train-vtg, eval-vtg, eval-rvos,
// bench-attn. Failures print one line "error: <Code>: <detail>" and exit 1.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "prefiner/bench.hpp"
#include "prefiner/error.hpp"
#include "prefiner/parallel.hpp"
#include "prefiner/planner.hpp"
#include "prefiner/prtk.hpp"
#include "prefiner/refiner.hpp"
#include "prefiner/rng.hpp"
#include "prefiner/synth.hpp"
#include "prefiner/train.hpp"
#include "prefiner/treebank.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace prefiner;

namespace {

struct Global {
  std::size_t threads = 1;
  bool json_out = false;
  std::uint64_t seed = 42;
};

struct EmbedOpts {
  std::string file;
  std::uint64_t seed = 42;
};

void add_embed_opts(CLI::App* cmd, EmbedOpts& e) {
  cmd->add_option("--embeddings", e.file, "phrase embedding file (default: hashed embeddings)");
  cmd->add_option("--emb-seed", e.seed, "seed of the hashed embeddings");
}

EmbeddingProvider provider_for(const EmbedOpts& e, std::size_t dim) {
  if (e.file.empty()) return EmbeddingProvider::hashed(dim, e.seed);
  EmbeddingProvider p = load_embedding_file(e.file);
  if (p.dim() != dim) {
    fail(ErrorCode::DimMismatch, e.file + " has dimension " + std::to_string(p.dim()) + ", need " + std::to_string(dim));
  }
  return p;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  return out;
}

// Writes to `path`, or stdout when empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
  } else {
    auto out = open_out(path);
    out << text;
  }
}

json chain_json(const SubPromptChain& chain) {
  json j;
  j["P"] = chain.size();
  j["np"] = chain.empty() ? "" : chain.prompts.front().np_text;
  j["vps"] = json::array();
  j["vp_spans"] = json::array();
  for (const auto& p : chain.prompts) {
    j["vps"].push_back(p.vp_text);
    j["vp_spans"].push_back({p.vp_span.lo, p.vp_span.hi});
  }
  if (chain.empty()) {
    j["np_span"] = json::array();
  } else {
    j["np_span"] = {chain.prompts.front().np_span.lo, chain.prompts.front().np_span.hi};
  }
  return j;
}

std::string rank_tsv(const RankTable& t) {
  std::ostringstream out;
  out << "n\tm\trank\n";
  char buf[64];
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < t.n_values.size(); ++i) {
    for (std::size_t j = 0; j < t.m_values.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%zu\t%g\t%.6f\n", t.n_values[i], t.m_values[j], t.value[i][j]);
      out << buf;
      sum += t.value[i][j];
      ++count;
    }
  }
  std::snprintf(buf, sizeof buf, "mean\t-\t%.6f\n", count > 0 ? sum / static_cast<double>(count) : 0.0);
  out << buf;
  return out.str();
}

json rank_json(const RankTable& t) {
  json j = json::object();
  for (std::size_t i = 0; i < t.n_values.size(); ++i) {
    for (std::size_t k = 0; k < t.m_values.size(); ++k) {
      char key[32];
      std::snprintf(key, sizeof key, "R%zu@%g", t.n_values[i], t.m_values[k]);
      j[key] = t.value[i][k];
    }
  }
  return j;
}

// Sequences are the subdirectories of `root`, or `root` itself when it holds
// the frames directly.
std::vector<std::string> sequence_names(const fs::path& root) {
  if (!fs::is_directory(root)) fail(ErrorCode::Io, "not a directory: " + root.string());
  std::vector<std::string> names;
  bool frames_here = false;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) names.push_back(e.path().filename().string());
    if (e.is_regular_file() && e.path().extension() == ".pgm") frames_here = true;
  }
  if (frames_here) return {""};
  std::sort(names.begin(), names.end());
  if (names.empty()) fail(ErrorCode::Io, "no mask sequences under " + root.string());
  return names;
}

Variant variant_from(const std::string& s) { return parse_variant(s); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Language-guided recurrent refinement of visual token grids."};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--threads", g.threads, "worker threads (1 = deterministic single-threaded)")->check(CLI::PositiveNumber);
  app.add_flag("--json", g.json_out, "print machine-readable JSON to stdout");
  app.add_option("--seed", g.seed, "root seed; sub-streams: dataset, init, shuffle");

  // decompose
  auto* dec = app.add_subcommand("decompose", "split bracketed trees into (NP, VP) sub-prompt chains, one JSON line per tree");
  std::string dec_in, dec_out;
  bool dec_strict = false;
  dec->add_option("trees", dec_in, "file of bracketed trees, one per line")->required();
  dec->add_option("--out", dec_out, "output file (default stdout)");
  dec->add_flag("--strict", dec_strict, "fail on trees without NP or VP instead of falling back");

  // refine
  auto* ref = app.add_subcommand("refine", "refine a token grid with the sub-prompts of a tree");
  std::string ref_grid, ref_tree, ref_out, ref_log, ref_ckpt, ref_variant = "full";
  std::size_t ref_heads = 4;
  EmbedOpts ref_emb;
  ref->add_option("--grid", ref_grid, "input grid [N_f, T, C] (PRTK)")->required();
  ref->add_option("--tree", ref_tree, "tree file; the first tree is used")->required();
  ref->add_option("--out", ref_out, "refined grid (PRTK)")->required();
  ref->add_option("--log", ref_log, "JSON step log (default stdout)");
  ref->add_option("--checkpoint", ref_ckpt, "trained parameters (default: fresh init from --seed)");
  ref->add_option("--variant", ref_variant, "full, no-spatial, no-temporal, no-lang, joint, swap, parallel-avg, parallel-sum");
  ref->add_option("--heads", ref_heads, "attention heads for a fresh init")->check(CLI::PositiveNumber);
  add_embed_opts(ref, ref_emb);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a synthetic grounding dataset");
  std::string gen_out;
  SynthConfig sc;
  EmbedOpts gen_emb;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--n", sc.n_samples, "samples")->check(CLI::PositiveNumber);
  gen->add_option("--nf", sc.n_f, "object slots")->check(CLI::PositiveNumber);
  gen->add_option("--t", sc.t, "clips")->check(CLI::PositiveNumber);
  gen->add_option("--c", sc.c, "channels")->check(CLI::PositiveNumber);
  gen->add_option("--concepts", sc.n_concepts, "subject and action vocabulary size")->check(CLI::PositiveNumber);
  gen->add_option("--distractor-rate", sc.distractor_rate, "probability of a distractor instance")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--sigma", sc.noise_sigma, "feature noise standard deviation")->check(CLI::NonNegativeNumber);
  add_embed_opts(gen, gen_emb);

  // train-vtg
  auto* trn = app.add_subcommand("train-vtg", "train refiner and VTG head, write metrics.tsv and checkpoint.prtk");
  std::string trn_data, trn_out, trn_variant = "full";
  std::size_t trn_ntrain = 0;
  TrainConfig tc;
  EmbedOpts trn_emb;
  trn->add_option("--data", trn_data, "dataset directory or manifest.jsonl")->required();
  trn->add_option("--out", trn_out, "output directory")->required();
  trn->add_option("--variant", trn_variant, "refiner variant");
  trn->add_option("--n-train", trn_ntrain, "leading samples used for training, the rest are held out (0 = two thirds)");
  trn->add_option("--epochs", tc.epochs, "epochs");
  trn->add_option("--batch", tc.batch_size, "batch size")->check(CLI::PositiveNumber);
  trn->add_option("--heads", tc.heads, "attention heads")->check(CLI::PositiveNumber);
  trn->add_option("--lr", tc.adamw.lr, "AdamW learning rate")->check(CLI::PositiveNumber);
  trn->add_option("--weight-decay", tc.adamw.weight_decay, "AdamW decoupled weight decay")->check(CLI::NonNegativeNumber);
  trn->add_option("--tau-min", tc.labels.tau_min, "IoU mapped to label 0")->check(CLI::Range(0.0, 1.0));
  trn->add_option("--tau-max", tc.labels.tau_max, "IoU mapped to label 1")->check(CLI::Range(0.0, 1.0));
  trn->add_option("--logit-spread", tc.logit_spread, "initial logit spread of the calibrated head (0 = bare head)")
      ->check(CLI::NonNegativeNumber);
  add_embed_opts(trn, trn_emb);

  // eval-vtg
  auto* evv = app.add_subcommand("eval-vtg", "Rank n@m of a checkpoint on a dataset, as TSV");
  std::string evv_data, evv_ckpt, evv_out, evv_variant = "full";
  std::size_t evv_skip = 0;
  EmbedOpts evv_emb;
  evv->add_option("--data", evv_data, "dataset directory or manifest.jsonl")->required();
  evv->add_option("--checkpoint", evv_ckpt, "checkpoint written by train-vtg")->required();
  evv->add_option("--variant", evv_variant, "refiner variant");
  evv->add_option("--skip", evv_skip, "leading samples to leave out (e.g. the training split)");
  evv->add_option("--out", evv_out, "TSV file (default stdout)");
  add_embed_opts(evv, evv_emb);

  // eval-rvos
  auto* evr = app.add_subcommand("eval-rvos", "J, F and J&F of predicted mask sequences, as TSV");
  std::string evr_pred, evr_gt, evr_out;
  std::size_t evr_radius = 1;
  evr->add_option("--pred", evr_pred, "predicted masks: one subdirectory of PGM frames per sequence")->required();
  evr->add_option("--gt", evr_gt, "ground-truth masks, same layout")->required();
  evr->add_option("--radius", evr_radius, "boundary tolerance in pixels");
  evr->add_option("--out", evr_out, "TSV file (default stdout)");

  // bench-attn
  auto* bch = app.add_subcommand("bench-attn", "MAC counts and wall-clock of factorized vs joint attention");
  BenchDims bd{32, 32, 64, 4};
  std::size_t bch_repeats = 5;
  std::string bch_out;
  bch->add_option("--nf", bd.n_f, "object slots")->check(CLI::PositiveNumber);
  bch->add_option("--t", bd.t, "frames")->check(CLI::PositiveNumber);
  bch->add_option("--c", bd.c, "channels")->check(CLI::PositiveNumber);
  bch->add_option("--heads", bd.heads, "attention heads")->check(CLI::PositiveNumber);
  bch->add_option("--repeats", bch_repeats, "timed runs per layout (median reported)")->check(CLI::Range(5, 1000000));
  bch->add_option("--out", bch_out, "TSV report (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: InvalidArgument: " << e.what() << '\n';
    return 2;
  }

  try {
    set_num_threads(g.threads);

    if (*dec) {
      std::ostringstream out;
      for (const ParseTree& tree : read_tree_file(dec_in)) {
        out << chain_json(dec_strict ? decompose(tree) : decompose_with_fallback(tree)).dump() << '\n';
      }
      emit(dec_out, out.str());
    } else if (*ref) {
      const Tensor grid = load_prtk(ref_grid);
      if (grid.rank() != 3) fail(ErrorCode::ShapeMismatch, ref_grid + ": grid must be [N_f, T, C]");
      const auto trees = read_tree_file(ref_tree);
      if (trees.empty()) fail(ErrorCode::ParseError, ref_tree + ": no tree");
      const std::size_t c = grid.dim(2);
      const EmbeddingProvider provider = provider_for(ref_emb, c);
      RefinerParams params;
      if (!ref_ckpt.empty()) {
        params = load_checkpoint(ref_ckpt).refiner;
      } else {
        std::mt19937_64 rng = make_rng(g.seed, "init");
        params = RefinerParams::init(c, ref_heads, rng);
      }
      if (params.dim() != c) fail(ErrorCode::DimMismatch, "checkpoint width does not match the grid");
      RefinerConfig rc;
      rc.variant = variant_from(ref_variant);
      const SubPromptChain chain = decompose_with_fallback(trees.front());
      RefineTrace trace;
      Tensor out;
      {
        TapeScope off(nullptr);
        out = refine(params, rc, grid, chain, provider, &trace);
      }
      save_prtk(ref_out, out);
      json log{{"P", chain.size()}, {"variant", std::string(to_string(rc.variant))}, {"stages", trace.stages},
               {"per_step_output_norms", trace.step_norms}};
      emit(ref_log, log.dump() + '\n');
    } else if (*gen) {
      sc.seed = g.seed;
      const EmbeddingProvider provider = provider_for(gen_emb, sc.c);
      const auto samples = generate_vtg_dataset(sc, provider);
      write_dataset(samples, gen_out);
      if (g.json_out) std::cout << json{{"samples", samples.size()}, {"dir", gen_out}}.dump() << '\n';
    } else if (*trn) {
      const auto all = read_dataset(trn_data);
      if (all.size() < 2) fail(ErrorCode::DatasetNotFound, trn_data + ": need at least two samples");
      const std::size_t n_train = trn_ntrain > 0 ? trn_ntrain : (2 * all.size()) / 3;
      if (n_train >= all.size()) fail(ErrorCode::InvalidArgument, "--n-train leaves no held-out samples");
      const std::vector<GroundingSample> train(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
      const std::vector<GroundingSample> test(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
      tc.seed = g.seed;
      tc.refiner.variant = variant_from(trn_variant);
      const EmbeddingProvider provider = provider_for(trn_emb, all.front().grid.dim(2));
      const TrainResult res = train_vtg(train, test, provider, tc, [&](const EpochMetrics& m) {
        std::fprintf(stderr, "epoch %zu loss %.6f R1@0.5 %.4f R5@0.5 %.4f\n", m.epoch, m.train_loss, m.test.at(1, 0.5),
                     m.test.at(5, 0.5));
      });
      fs::create_directories(trn_out);
      auto tsv = open_out((fs::path(trn_out) / "metrics.tsv").string());
      tsv << metrics_tsv(res.history);
      save_checkpoint(fs::path(trn_out) / "checkpoint.prtk", res.model);
      if (g.json_out) {
        std::cout << json{{"epochs", tc.epochs}, {"variant", trn_variant}, {"test", rank_json(res.history.back().test)}}.dump()
                  << '\n';
      }
    } else if (*evv) {
      const auto all = read_dataset(evv_data);
      if (evv_skip >= all.size()) fail(ErrorCode::EmptyQuerySet, "--skip leaves no samples");
      const VtgModel model = load_checkpoint(evv_ckpt);
      const EmbeddingProvider provider = provider_for(evv_emb, model.refiner.dim());
      RefinerConfig rc;
      rc.variant = variant_from(evv_variant);
      std::vector<PreparedSample> prepared;
      for (std::size_t i = evv_skip; i < all.size(); ++i) prepared.push_back(prepare_sample(all[i], provider, {}));
      const RankTable t = evaluate_vtg(model, rc, prepared);
      emit(evv_out, rank_tsv(t));
      if (g.json_out && !evv_out.empty()) std::cout << rank_json(t).dump() << '\n';
    } else if (*evr) {
      std::ostringstream out;
      out << "sequence\tJ\tF\tJ&F\n";
      double sj = 0.0, sf = 0.0, sjf = 0.0;
      const auto names = sequence_names(evr_gt);
      char buf[128];
      for (const auto& name : names) {
        const auto gt = read_mask_sequence(fs::path(evr_gt) / name);
        const auto pred = read_mask_sequence(fs::path(evr_pred) / name);
        const JFScore s = j_and_f(pred, gt, evr_radius);
        std::snprintf(buf, sizeof buf, "%s\t%.6f\t%.6f\t%.6f\n", name.empty() ? "." : name.c_str(), s.j, s.f, s.jf);
        out << buf;
        sj += s.j;
        sf += s.f;
        sjf += s.jf;
      }
      const double n = static_cast<double>(names.size());
      std::snprintf(buf, sizeof buf, "mean\t%.6f\t%.6f\t%.6f\n", sj / n, sf / n, sjf / n);
      out << buf;
      emit(evr_out, out.str());
    } else if (*bch) {
      const ComplexityReport r = bench_wallclock(bd, bch_repeats);
      std::ostringstream out;
      write_report_tsv(out, {r});
      emit(bch_out, out.str());
      if (g.json_out) {
        std::cout << json{{"factorized_macs", r.factorized_macs},
                          {"joint_macs", r.joint_macs},
                          {"predicted_factorized", r.predicted_factorized},
                          {"predicted_joint", r.predicted_joint},
                          {"wall_factorized_ms", r.wall_factorized_ms},
                          {"wall_joint_ms", r.wall_joint_ms}}
                         .dump()
                  << '\n';
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';  // what() starts with the code
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
