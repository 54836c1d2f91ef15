#include "prefiner/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "prefiner/error.hpp"
#include "prefiner/planner.hpp"
#include "prefiner/prtk.hpp"
#include "prefiner/rng.hpp"

namespace prefiner {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kParamNames = {"spatial.w_q",  "spatial.w_k",  "spatial.w_v",  "spatial.w_o",
                                              "temporal.w_q", "temporal.w_k", "temporal.w_v", "temporal.w_o",
                                              "residual.w",   "head.scale",   "head.bias"};

std::string format_rank_key(std::size_t n, double m) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "R%zu@%g", n, m);
  return buf;
}

}  // namespace

std::vector<Tensor> VtgModel::parameters() const {
  std::vector<Tensor> out = refiner.parameters();
  out.push_back(head.scale);
  out.push_back(head.bias);
  return out;
}

PreparedSample prepare_sample(const GroundingSample& s, const EmbeddingProvider& provider, const VtgLabelConfig& labels) {
  const ParseTree tree = parse_tree(s.tree_text);
  PreparedSample p;
  p.grid = s.grid;
  p.sentence = provider.embed_tensor(tree.surface());
  p.phrases = embed_chain(decompose_with_fallback(tree), provider);
  p.gt = s.gt;
  p.candidates = s.candidates;
  p.labels = scaled_iou_labels(s.candidates, s.gt, labels);
  return p;
}

std::vector<Segment> rank_candidates(const VtgModel& model, const RefinerConfig& cfg, const PreparedSample& s) {
  TapeScope off(nullptr);
  const Tensor logits = model.head.apply(vtg_logits(refine(model.refiner, cfg, s.grid, s.phrases), s.sentence, s.candidates));
  std::vector<std::size_t> order(s.candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& v = logits.values();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  std::vector<Segment> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(s.candidates[i]);
  return out;
}

RankTable evaluate_vtg(const VtgModel& model, const RefinerConfig& cfg, const std::vector<PreparedSample>& samples,
                       const RankConfig& rank) {
  std::vector<RankedQuery> queries;
  queries.reserve(samples.size());
  for (const auto& s : samples) queries.push_back({rank_candidates(model, cfg, s), s.gt});
  return rank_n_at_m(queries, rank);
}

TrainResult train_vtg(const std::vector<GroundingSample>& train, const std::vector<GroundingSample>& test,
                      const EmbeddingProvider& provider, const TrainConfig& cfg,
                      const std::function<void(const EpochMetrics&)>& on_epoch) {
  if (train.empty() && cfg.epochs > 0) fail(ErrorCode::DatasetNotFound, "training split is empty");
  if (test.empty()) fail(ErrorCode::EmptyQuerySet, "held-out split is empty");
  if (cfg.batch_size == 0) fail(ErrorCode::InvalidArgument, "batch size must be positive");
  const std::size_t c = provider.dim();

  std::vector<PreparedSample> train_set, test_set;
  for (const auto& s : train) train_set.push_back(prepare_sample(s, provider, cfg.labels));
  for (const auto& s : test) test_set.push_back(prepare_sample(s, provider, cfg.labels));

  std::mt19937_64 init_rng = make_rng(cfg.seed, "init");
  TrainResult result{{RefinerParams::init(c, cfg.heads, init_rng), VtgHead::identity()}, {}};
  std::vector<Tensor> params = result.model.refiner.parameters();
  if (cfg.logit_spread > 0.0 && !train_set.empty()) {
    // Calibrate the head on the untrained refiner's logits over the training split.
    TapeScope off(nullptr);
    std::vector<double> raw;
    double label_sum = 0.0;
    for (const auto& s : train_set) {
      const Tensor l = vtg_logits(refine(result.model.refiner, cfg.refiner, s.grid, s.phrases), s.sentence, s.candidates);
      raw.insert(raw.end(), l.values().begin(), l.values().end());
      for (double y : s.labels) label_sum += y;
    }
    const double base_rate = std::clamp(label_sum / static_cast<double>(raw.size()), 1e-6, 1.0 - 1e-6);
    result.model.head = VtgHead::calibrated(raw, base_rate, cfg.logit_spread);
    for (Tensor& t : result.model.head.parameters()) {
      t.set_requires_grad(true);
      params.push_back(t);
    }
  }
  AdamWState state;
  std::mt19937_64 shuffle_rng = make_rng(cfg.seed, "shuffle");

  auto report = [&](std::size_t epoch, double loss) {
    EpochMetrics m{epoch, loss, evaluate_vtg(result.model, cfg.refiner, test_set, cfg.rank)};
    if (on_epoch) on_epoch(m);
    result.history.push_back(std::move(m));
  };
  {
    // Baseline row: the untrained model's loss on the training split.
    TapeScope off(nullptr);
    double loss = 0.0;
    for (const auto& s : train_set) {
      Tensor refined = refine(result.model.refiner, cfg.refiner, s.grid, s.phrases);
      loss += vtg_loss(vtg_scores(refined, s.sentence, s.candidates, &result.model.head), s.labels).item();
    }
    report(0, train_set.empty() ? 0.0 : loss / static_cast<double>(train_set.size()));
  }

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      const double weight = 1.0 / static_cast<double>(hi - lo);
      zero_grads(params);
      for (std::size_t i = lo; i < hi; ++i) {
        const PreparedSample& s = train_set[order[i]];
        Tape tape;
        TapeScope scope(tape);
        Tensor refined = refine(result.model.refiner, cfg.refiner, s.grid, s.phrases);
        Tensor loss = vtg_loss(vtg_scores(refined, s.sentence, s.candidates, &result.model.head), s.labels);
        if (!std::isfinite(loss.item())) {
          fail(ErrorCode::Divergence, "non-finite loss at epoch " + std::to_string(epoch));
        }
        epoch_loss += loss.item();
        tape.backward(scale(loss, weight));
      }
      adamw_step(params, state, cfg.adamw);
    }
    report(epoch, train_set.empty() ? 0.0 : epoch_loss / static_cast<double>(train_set.size()));
  }
  return result;
}

std::string metrics_tsv(const std::vector<EpochMetrics>& history) {
  std::ostringstream out;
  out << "epoch\ttrain_loss";
  if (!history.empty()) {
    const auto& t = history.front().test;
    for (std::size_t n : t.n_values) {
      for (double m : t.m_values) out << '\t' << format_rank_key(n, m);
    }
  }
  out << '\n';
  char buf[64];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%zu\t%.6f", h.epoch, h.train_loss);
    out << buf;
    for (const auto& row : h.test.value) {
      for (double v : row) {
        std::snprintf(buf, sizeof buf, "\t%.4f", v);
        out << buf;
      }
    }
    out << '\n';
  }
  return out.str();
}

void save_checkpoint(const fs::path& path, const VtgModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  const RefinerParams& params = model.refiner;
  const auto tensors = model.parameters();
  json index;
  index["format"] = "prefiner-checkpoint";
  index["version"] = 1;
  index["dim"] = params.dim();
  index["spatial_heads"] = params.spatial.heads;
  index["temporal_heads"] = params.temporal.heads;
  index["layer_norm"] = params.spatial.layer_norm;
  index["tensors"] = json::array();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto offset = static_cast<std::uint64_t>(out.tellp());
    write_prtk(out, tensors[i]);
    index["tensors"].push_back({{"name", kParamNames[i]}, {"shape", tensors[i].shape()}, {"offset", offset}});
  }
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
  std::ofstream idx(path.string() + ".json");
  if (!idx) fail(ErrorCode::Io, "cannot write " + path.string() + ".json");
  idx << index.dump(2) << '\n';
}

VtgModel load_checkpoint(const fs::path& path) {
  const std::string index_path = path.string() + ".json";
  std::ifstream idx(index_path);
  if (!idx) fail(ErrorCode::Io, "cannot open " + index_path);
  json index;
  try {
    index = json::parse(idx);
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, index_path + ": " + e.what());
  }
  if (index.value("version", 0) != 1) fail(ErrorCode::FormatVersionMismatch, index_path + ": unknown checkpoint version");
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::vector<Tensor> tensors;
  for (const auto& entry : index.at("tensors")) {
    in.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    tensors.push_back(read_prtk(in));
  }
  if (tensors.size() != kParamNames.size()) {
    fail(ErrorCode::ParseError, index_path + ": expected " + std::to_string(kParamNames.size()) + " tensors");
  }
  for (auto& t : tensors) t.set_requires_grad(true);
  RefinerParams p;
  p.spatial = {tensors[0], tensors[1], tensors[2], tensors[3], index.at("spatial_heads").get<std::size_t>(),
               index.value("layer_norm", false)};
  p.temporal = {tensors[4], tensors[5], tensors[6], tensors[7], index.at("temporal_heads").get<std::size_t>(),
                index.value("layer_norm", false)};
  p.residual_w = tensors[8];
  p.spatial.validate();
  p.temporal.validate();
  VtgModel m{p, {tensors[9], tensors[10]}};
  if (m.head.scale.shape() != Shape{1, 1} || m.head.bias.shape() != Shape{1}) {
    fail(ErrorCode::ShapeMismatch, index_path + ": bad head tensor shapes");
  }
  return m;
}

}  // namespace prefiner
