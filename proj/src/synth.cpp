#include "prefiner/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "prefiner/error.hpp"
#include "prefiner/prtk.hpp"
#include "prefiner/rng.hpp"
#include "prefiner/treebank.hpp"

namespace prefiner {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kSubjects = {"panda", "horse", "dog",  "cat",  "bird",  "bear",   "tiger", "zebra",
                                            "sheep", "goat",  "lion", "duck", "rabbit", "monkey", "fox",   "deer"};
const std::vector<std::string> kActions = {"walks", "eats",  "jumps", "runs",   "sits",  "turns", "swims",  "climbs",
                                           "sleeps", "drinks", "rolls", "waves", "kicks", "spins", "digs",   "hops",
                                           "shakes", "stands", "bites", "pushes", "crawls", "barks", "flies", "nods"};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::string query_tree(const std::string& subject, const std::vector<std::string>& actions) {
  std::string np = "(NP (DT the) (NN " + subject + "))";
  if (actions.size() == 1) return "(S " + np + " (VP (VBZ " + actions[0] + ")))";
  std::string vp = "(VP";
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (i > 0) vp += i + 1 == actions.size() ? " (CC and)" : " (, ,)";
    vp += " (VP (VBZ " + actions[i] + "))";
  }
  return "(S " + np + " " + vp + "))";
}

// Splits [lo, lo + width) into k ordered, contiguous, nonempty parts.
std::vector<Segment> split_span(std::size_t lo, std::size_t width, std::size_t k) {
  std::vector<Segment> parts;
  std::size_t at = lo;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t len = width / k + (i >= k - width % k ? 1 : 0);
    parts.push_back({at, at + len});
    at += len;
  }
  return parts;
}

void add_to(std::vector<double>& grid, std::size_t t, std::size_t c, std::size_t slot, std::size_t clip,
            const std::vector<double>& v) {
  double* dst = grid.data() + (slot * t + clip) * c;
  for (std::size_t j = 0; j < c; ++j) dst[j] += v[j];
}

json segment_json(const Segment& s) { return json::array({s.start, s.end}); }

Segment segment_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_unsigned() || !j[1].is_number_unsigned()) {
    fail(ErrorCode::ParseError, where + ": segment must be [start, end]");
  }
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>()};
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

}  // namespace

void SynthConfig::validate() const {
  auto need = [](bool ok, const char* msg) {
    if (!ok) fail(ErrorCode::InvalidArgument, std::string("synth config: ") + msg);
  };
  need(n_samples > 0 && n_f > 0 && t > 0 && c > 0, "sizes must be positive");
  need(n_concepts >= 4 && n_concepts <= std::min(kSubjects.size(), kActions.size()),
       "n_concepts must lie in [4, 16]");
  need(distractor_rate >= 0.0 && distractor_rate <= 1.0, "distractor_rate must lie in [0, 1]");
  need(noise_sigma >= 0.0, "noise_sigma must be nonnegative");
  need(gt_width >= 3, "gt_width must be at least 3");
  need(t >= 3 * gt_width + 2, "t too small for a ground-truth and a distractor window");
  need(target_slots >= 1 && 2 * target_slots <= n_f, "need 1 <= target_slots <= n_f / 2");
  need(margin >= 0.0, "margin must be nonnegative");
}

std::vector<Segment> sliding_window_candidates(std::size_t t) {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<Segment> out;
  for (std::size_t w : {4, 8, 16, 32}) {
    const std::size_t stride = w / 4;
    for (std::size_t s = 0; s < t; s += stride) {
      Segment seg{s, std::min(t, s + w)};
      if (seen.insert({seg.start, seg.end}).second) out.push_back(seg);
      if (s + w >= t) break;
    }
  }
  return out;
}

std::string sentence_of(const std::string& tree_text) { return parse_tree(tree_text).surface(); }

std::vector<GroundingSample> generate_vtg_dataset(const SynthConfig& cfg, const EmbeddingProvider& provider) {
  cfg.validate();
  if (provider.dim() != cfg.c) {
    fail(ErrorCode::DimMismatch, "embedding dimension " + std::to_string(provider.dim()) + " vs grid width " +
                                     std::to_string(cfg.c));
  }
  const std::size_t nf = cfg.n_f, t = cfg.t, c = cfg.c, w = cfg.gt_width;
  const auto candidates = sliding_window_candidates(t);
  std::vector<GroundingSample> out;
  for (std::size_t idx = 0; idx < cfg.n_samples; ++idx) {
    std::mt19937_64 rng = make_rng(cfg.seed, "dataset/" + std::to_string(idx));
    std::normal_distribution<double> noise(0.0, 1.0);

    // Query and distractor actions, resampled until the noiseless grid ranks
    // the ground truth first.
    std::string subject;
    std::vector<std::string> actions;
    std::vector<std::vector<double>> action_vecs;
    std::vector<double> sentence;
    double weakest = 0.0;
    std::vector<std::size_t> wrong_pool;
    for (;;) {
      subject = kSubjects[pick(rng, cfg.n_concepts)];
      const std::size_t k = 1 + pick(rng, 3);
      std::vector<std::size_t> order(cfg.n_concepts);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      actions.clear();
      action_vecs.clear();
      for (std::size_t i = 0; i < k; ++i) {
        actions.push_back(kActions[order[i]]);
        action_vecs.push_back(provider.embed(actions.back()).vector);
      }
      sentence = provider.embed(sentence_of(query_tree(subject, actions))).vector;
      weakest = 1e300;
      for (const auto& a : action_vecs) weakest = std::min(weakest, dot(a, sentence));
      if (weakest <= cfg.margin) continue;
      wrong_pool.clear();
      for (std::size_t i = k; i < order.size(); ++i) {
        if (dot(provider.embed(kActions[order[i]]).vector, sentence) < weakest - cfg.margin) wrong_pool.push_back(order[i]);
      }
      if (!wrong_pool.empty()) break;
    }

    // Slots: target instance, distractor instance, background clutter.
    std::vector<std::size_t> slots(nf);
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    std::shuffle(slots.begin(), slots.end(), rng);
    const std::vector<std::size_t> target(slots.begin(), slots.begin() + static_cast<std::ptrdiff_t>(cfg.target_slots));
    const std::vector<std::size_t> other(slots.begin() + static_cast<std::ptrdiff_t>(cfg.target_slots),
                                         slots.begin() + static_cast<std::ptrdiff_t>(2 * cfg.target_slots));

    // Ground truth never touches the last clip, so no clipped window is a
    // strict part of it.
    const std::size_t gt_start = pick(rng, t - w);
    const Segment gt{gt_start, gt_start + w};

    std::vector<double> grid(nf * t * c, 0.0);
    const auto subject_vec = provider.embed("the " + subject).vector;
    for (std::size_t s : target) {
      for (std::size_t f = 0; f < t; ++f) add_to(grid, t, c, s, f, subject_vec);
    }
    const auto parts = split_span(gt.start, w, actions.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
      for (std::size_t s : target) {
        for (std::size_t f = parts[i].start; f < parts[i].end; ++f) add_to(grid, t, c, s, f, action_vecs[i]);
      }
    }

    const bool has_distractor = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.distractor_rate;
    if (has_distractor) {
      for (std::size_t s : other) {
        for (std::size_t f = 0; f < t; ++f) add_to(grid, t, c, s, f, subject_vec);
      }
      // A window of the same width that does not overlap the ground truth.
      std::vector<std::size_t> starts;
      for (std::size_t s = 0; s + w < t; ++s) {
        if (s + w <= gt.start || s >= gt.end) starts.push_back(s);
      }
      const std::size_t d_start = starts[pick(rng, starts.size())];
      const auto d_parts = split_span(d_start, w, actions.size());
      // Each sub-span shows the right action, a wrong one or nothing; at
      // least one is off so the instance only partly matches the query.
      std::vector<std::size_t> kind(d_parts.size());
      for (auto& x : kind) x = pick(rng, 3);
      if (std::all_of(kind.begin(), kind.end(), [](std::size_t x) { return x == 0; })) {
        kind[pick(rng, kind.size())] = 1 + pick(rng, 2);
      }
      for (std::size_t i = 0; i < d_parts.size(); ++i) {
        if (kind[i] == 2) continue;
        const auto& v = kind[i] == 0 ? action_vecs[i]
                                     : provider.embed(kActions[wrong_pool[pick(rng, wrong_pool.size())]]).vector;
        for (std::size_t s : other) {
          for (std::size_t f = d_parts[i].start; f < d_parts[i].end; ++f) add_to(grid, t, c, s, f, v);
        }
      }
    } else {
      for (std::size_t s : other) {
        const auto& v = provider.embed("the " + kSubjects[pick(rng, kSubjects.size())]).vector;
        for (std::size_t f = 0; f < t; ++f) add_to(grid, t, c, s, f, v);
      }
    }
    for (std::size_t si = 2 * cfg.target_slots; si < nf; ++si) {
      const auto& v = provider.embed("the " + kSubjects[pick(rng, kSubjects.size())]).vector;
      for (std::size_t f = 0; f < t; ++f) add_to(grid, t, c, slots[si], f, v);
    }
    if (cfg.noise_sigma > 0.0) {
      for (double& x : grid) x += cfg.noise_sigma * noise(rng);
    }

    char id[32];
    std::snprintf(id, sizeof id, "s%05zu", idx);
    out.push_back({id, Tensor::from({nf, t, c}, std::move(grid)), query_tree(subject, actions), gt, candidates});
  }
  return out;
}

// ---- files -----------------------------------------------------------------

void write_sample(const GroundingSample& sample, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  save_prtk(dir / "grid.prtk", sample.grid);
  write_text(dir / "tree.mrg", sample.tree_text + "\n");
  json meta;
  meta["id"] = sample.id;
  meta["gt"] = segment_json(sample.gt);
  meta["candidates"] = json::array();
  for (const auto& s : sample.candidates) meta["candidates"].push_back(segment_json(s));
  write_text(dir / "meta.json", meta.dump() + "\n");
}

GroundingSample read_sample(const fs::path& dir) {
  GroundingSample s;
  const fs::path meta_path = dir / "meta.json";
  json meta;
  try {
    meta = json::parse(read_text(meta_path));
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, meta_path.string() + ": " + e.what());
  }
  if (!meta.contains("id") || !meta.contains("gt") || !meta.contains("candidates")) {
    fail(ErrorCode::ParseError, meta_path.string() + ": needs id, gt and candidates");
  }
  s.id = meta["id"].get<std::string>();
  s.gt = segment_from(meta["gt"], meta_path.string());
  for (const auto& j : meta["candidates"]) s.candidates.push_back(segment_from(j, meta_path.string()));
  std::string tree = read_text(dir / "tree.mrg");
  while (!tree.empty() && (tree.back() == '\n' || tree.back() == '\r')) tree.pop_back();
  s.tree_text = tree;
  s.grid = load_prtk(dir / "grid.prtk");
  return s;
}

void write_dataset(const std::vector<GroundingSample>& samples, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  std::string manifest;
  for (const auto& s : samples) {
    write_sample(s, dir / s.id);
    json row;
    row["id"] = s.id;
    row["grid"] = (fs::path(s.id) / "grid.prtk").generic_string();
    row["tree"] = s.tree_text;
    row["gt"] = segment_json(s.gt);
    row["candidates"] = json::array();
    for (const auto& c : s.candidates) row["candidates"].push_back(segment_json(c));
    manifest += row.dump() + "\n";
  }
  write_text(dir / "manifest.jsonl", manifest);
}

std::vector<GroundingSample> read_dataset(const fs::path& dir_or_manifest) {
  const fs::path manifest = fs::is_directory(dir_or_manifest) ? dir_or_manifest / "manifest.jsonl" : dir_or_manifest;
  if (!fs::is_regular_file(manifest)) fail(ErrorCode::DatasetNotFound, "no dataset manifest at " + manifest.string());
  const fs::path root = manifest.parent_path();
  std::istringstream in(read_text(manifest));
  std::string line;
  std::size_t lineno = 0;
  std::vector<GroundingSample> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = manifest.string() + ":" + std::to_string(lineno);
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::ParseError, where + ": " + e.what());
    }
    for (const char* key : {"id", "grid", "tree", "gt", "candidates"}) {
      if (!row.contains(key)) fail(ErrorCode::ParseError, where + ": missing key '" + key + "'");
    }
    GroundingSample s;
    s.id = row["id"].get<std::string>();
    s.tree_text = row["tree"].get<std::string>();
    s.gt = segment_from(row["gt"], where);
    for (const auto& j : row["candidates"]) s.candidates.push_back(segment_from(j, where));
    s.grid = load_prtk(root / row["grid"].get<std::string>());
    out.push_back(std::move(s));
  }
  if (out.empty()) fail(ErrorCode::DatasetNotFound, "dataset manifest " + manifest.string() + " lists no samples");
  return out;
}

// ---- RVOS ------------------------------------------------------------------

RvosSample generate_rvos_sample(const RvosSynthConfig& cfg, const EmbeddingProvider& provider, std::size_t index) {
  if (provider.dim() != cfg.c) fail(ErrorCode::DimMismatch, "embedding dimension differs from RVOS width");
  if (cfg.height < 4 || cfg.width < 4) fail(ErrorCode::InvalidArgument, "RVOS frames must be at least 4x4");
  std::mt19937_64 rng = make_rng(cfg.seed, "rvos/" + std::to_string(index));
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t c = cfg.c;

  const std::string subject = kSubjects[pick(rng, kSubjects.size())];
  const std::string action = kActions[pick(rng, kActions.size())];
  const std::vector<std::string> words = {"the", subject, action};
  std::vector<double> tokens;
  for (const auto& wd : words) {
    const auto v = provider.embed(wd).vector;
    tokens.insert(tokens.end(), v.begin(), v.end());
  }

  std::vector<double> grid(cfg.n_f * cfg.t * c);
  for (double& x : grid) x = noise(rng);

  std::vector<double> fg(c, 0.0);
  for (std::size_t i = 0; i < tokens.size(); ++i) fg[i % c] += tokens[i];
  double n2 = 0.0;
  for (double x : fg) n2 += x * x;
  for (double& x : fg) x /= std::sqrt(n2);

  RvosSample s;
  s.id = "r" + std::to_string(index);
  std::vector<double> mf(cfg.t * cfg.height * cfg.width * c);
  const std::size_t side = std::max<std::size_t>(2, std::min(cfg.height, cfg.width) / 3);
  for (std::size_t f = 0; f < cfg.t; ++f) {
    Mask m(cfg.height, cfg.width);
    const std::size_t y0 = pick(rng, cfg.height - side + 1), x0 = pick(rng, cfg.width - side + 1);
    for (std::size_t y = 0; y < cfg.height; ++y) {
      for (std::size_t x = 0; x < cfg.width; ++x) {
        const bool on = y >= y0 && y < y0 + side && x >= x0 && x < x0 + side;
        m.set(y, x, on);
        double* dst = mf.data() + ((f * cfg.height + y) * cfg.width + x) * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] = (on ? fg[j] : -fg[j]) + cfg.noise_sigma * noise(rng);
      }
    }
    s.gt_masks.push_back(std::move(m));
  }
  s.grid = Tensor::from({cfg.n_f, cfg.t, c}, std::move(grid));
  s.tokens = Tensor::from({words.size(), c}, std::move(tokens));
  s.mask_features = Tensor::from({cfg.t, cfg.height, cfg.width, c}, std::move(mf));
  return s;
}

void write_pgm(const fs::path& path, const Mask& mask) {
  std::string data = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
  for (auto p : mask.pixels) data.push_back(static_cast<char>(p ? 255 : 0));
  write_text(path, data);
}

Mask read_pgm(const fs::path& path) {
  const std::string data = read_text(path);
  std::istringstream in(data);
  std::string magic;
  in >> magic;
  if (magic != "P5") fail(ErrorCode::ParseError, path.string() + ": not a binary PGM (P5)");
  std::size_t fields[3];
  for (auto& f : fields) {
    // skip whitespace and comments
    in >> std::ws;
    while (in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      in >> std::ws;
    }
    if (!(in >> f)) fail(ErrorCode::ParseError, path.string() + ": bad PGM header");
  }
  if (fields[2] == 0 || fields[2] > 255) fail(ErrorCode::ParseError, path.string() + ": PGM maxval must be 1..255");
  in.get();  // single whitespace before the raster
  Mask m(fields[1], fields[0]);
  const std::size_t offset = static_cast<std::size_t>(in.tellg());
  if (data.size() < offset + m.pixels.size()) fail(ErrorCode::ParseError, path.string() + ": PGM raster truncated");
  for (std::size_t i = 0; i < m.pixels.size(); ++i) m.pixels[i] = data[offset + i] != 0 ? 1 : 0;
  return m;
}

void write_mask_sequence(const fs::path& dir, const std::vector<Mask>& masks) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  char name[32];
  for (std::size_t f = 0; f < masks.size(); ++f) {
    std::snprintf(name, sizeof name, "%05zu.pgm", f);
    write_pgm(dir / name, masks[f]);
  }
}

std::vector<Mask> read_mask_sequence(const fs::path& dir) {
  std::vector<Mask> out;
  char name[32];
  for (std::size_t f = 0;; ++f) {
    std::snprintf(name, sizeof name, "%05zu.pgm", f);
    if (!fs::exists(dir / name)) break;
    out.push_back(read_pgm(dir / name));
  }
  if (out.empty()) fail(ErrorCode::Io, "no masks found under " + dir.string());
  return out;
}

}  // namespace prefiner
