#include "ganfinger/verification.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <tuple>

#include "ganfinger/error.hpp"
#include "ganfinger/training.hpp"

namespace ganfinger {

const char* input_kind_name(InputKind kind) { return kind == InputKind::x ? "x" : "x_prime"; }

InputKind parse_input_kind(const std::string& name) {
  if (name == "x") return InputKind::x;
  if (name == "x_prime") return InputKind::x_prime;
  throw IntegrityError("input_kind", "unknown input kind '" + name + "'");
}

std::vector<std::int64_t> LabelOracle::labels(std::span<const Query> queries) {
  std::vector<std::int64_t> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    try {
      out.push_back(label(q));
    } catch (const std::exception& e) {
      throw PartialResultError(std::string("suspect oracle failed: ") + e.what(), out.size());
    }
  }
  return out;
}

ModelOracle::ModelOracle(std::string suspect_id, NetworkPtr net) : id_(std::move(suspect_id)), net_(std::move(net)) {
  if (!net_) throw ValidationError("model oracle needs a network");
}

std::int64_t ModelOracle::label(const Query& query) {
  return predict_labels(*net_, query.input.unsqueeze(0))[0].item<std::int64_t>();
}

std::vector<std::int64_t> ModelOracle::labels(std::span<const Query> queries) {
  if (queries.empty()) return {};
  std::vector<torch::Tensor> xs;
  xs.reserve(queries.size());
  for (const auto& q : queries) xs.push_back(q.input);
  const auto y = predict_labels(*net_, torch::stack(xs)).contiguous();
  return {y.data_ptr<std::int64_t>(), y.data_ptr<std::int64_t>() + y.numel()};
}

namespace {

auto journal_key(const JournalEntry& e) { return std::make_tuple(e.pair_index, static_cast<int>(e.kind)); }

}  // namespace

void write_journal(const std::filesystem::path& path, std::vector<JournalEntry> entries) {
  std::stable_sort(entries.begin(), entries.end(),
                   [](const JournalEntry& a, const JournalEntry& b) { return journal_key(a) < journal_key(b); });
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ValidationError("cannot write " + tmp);
    for (const auto& e : entries) {
      out << nlohmann::json{{"suspect_id", e.suspect_id},
                            {"pair_index", e.pair_index},
                            {"input_kind", input_kind_name(e.kind)},
                            {"label", e.label}}
                 .dump()
          << '\n';
    }
  }
  std::filesystem::rename(tmp, path);
}

std::vector<JournalEntry> read_journal(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("journal not found: " + path.string());
  std::vector<JournalEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("suspect_id").get<std::string>(), j.at("pair_index").get<std::size_t>(),
                     parse_input_kind(j.at("input_kind").get<std::string>()), j.at("label").get<std::int64_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw IntegrityError("journal line " + std::to_string(line_no), e.what());
    }
  }
  return out;
}

TranscriptOracle::TranscriptOracle(std::string suspect_id, const std::vector<JournalEntry>& entries)
    : id_(std::move(suspect_id)) {
  for (const auto& e : entries) {
    if (e.suspect_id != id_) continue;
    const auto [it, fresh] = answers_.emplace(std::make_pair(e.pair_index, static_cast<int>(e.kind)), e.label);
    if (!fresh && it->second != e.label) {
      throw IntegrityError("journal", "conflicting answers for pair " + std::to_string(e.pair_index));
    }
  }
}

std::int64_t TranscriptOracle::label(const Query& query) {
  const auto it = answers_.find({query.pair_index, static_cast<int>(query.kind)});
  if (it == answers_.end()) {
    throw NotFoundError("no recorded answer for " + id_ + " pair " + std::to_string(query.pair_index) + " " +
                        input_kind_name(query.kind));
  }
  return it->second;
}

std::int64_t JournalingOracle::label(const Query& query) {
  const auto y = inner_.label(query);
  sink_.push_back({inner_.suspect_id(), query.pair_index, query.kind, y});
  return y;
}

std::vector<std::int64_t> JournalingOracle::labels(std::span<const Query> queries) {
  auto ys = inner_.labels(queries);
  for (std::size_t i = 0; i < ys.size(); ++i) {
    sink_.push_back({inner_.suspect_id(), queries[i].pair_index, queries[i].kind, ys[i]});
  }
  return ys;
}

ARDReport ard_from_labels(const std::string& suspect_id, std::span<const std::int64_t> y_v_x,
                          std::span<const std::int64_t> y_v_xp, std::span<const std::int64_t> suspect_x,
                          std::span<const std::int64_t> suspect_xp) {
  const auto k = y_v_x.size();
  if (k == 0) throw ValidationError("ARD needs at least one fingerprint pair");
  if (y_v_xp.size() != k || suspect_x.size() != k || suspect_xp.size() != k) {
    throw ValidationError("ARD label lists differ in length");
  }
  ARDReport r;
  r.suspect_id = suspect_id;
  r.k = k;
  r.per_pair.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    PairOutcome o;
    o.ori_mismatch = y_v_x[i] != suspect_x[i];
    o.conf_match = y_v_xp[i] != y_v_x[i] && y_v_xp[i] == suspect_xp[i];
    r.ori_mismatches += o.ori_mismatch;
    r.conf_matches += o.conf_match;
    r.per_pair.push_back(o);
  }
  const auto kd = static_cast<double>(k);
  r.p_ori = static_cast<double>(r.ori_mismatches) / kd;
  r.p_conf = static_cast<double>(r.conf_matches) / kd;
  r.ard = (static_cast<double>(r.conf_matches) - static_cast<double>(r.ori_mismatches)) / kd;
  return r;
}

ARDReport compute_ard(const FingerprintSet& fingerprints, LabelOracle& suspect) {
  const auto k = fingerprints.pairs.size();
  if (k == 0) throw ValidationError("ARD needs a non-empty fingerprint set");
  std::vector<Query> queries;
  queries.reserve(2 * k);
  for (std::size_t i = 0; i < k; ++i) {
    queries.push_back({i, InputKind::x, fingerprints.pairs[i].x});
    queries.push_back({i, InputKind::x_prime, fingerprints.pairs[i].x_prime});
  }
  std::vector<std::int64_t> answers;
  try {
    answers = suspect.labels(queries);
  } catch (const PartialResultError&) {
    throw;
  } catch (const std::exception& e) {
    throw PartialResultError(std::string("suspect oracle failed: ") + e.what(), 0);
  }
  if (answers.size() != queries.size()) {
    throw PartialResultError("suspect oracle returned too few answers", answers.size());
  }
  std::vector<std::int64_t> y_x(k), y_xp(k), s_x(k), s_xp(k);
  for (std::size_t i = 0; i < k; ++i) {
    y_x[i] = fingerprints.pairs[i].y_v_x;
    y_xp[i] = fingerprints.pairs[i].y_v_xp;
    s_x[i] = answers[2 * i];
    s_xp[i] = answers[2 * i + 1];
  }
  return ard_from_labels(suspect.suspect_id(), y_x, y_xp, s_x, s_xp);
}

const char* verdict_name(Verdict v) { return v == Verdict::pirated ? "pirated" : "irrelevant"; }

Verdict classify(const ARDReport& report, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("verification threshold must lie in (0, 1)");
  return report.ard > threshold ? Verdict::pirated : Verdict::irrelevant;
}

ARUCResult compute_curves(std::span<const double> pirated_ards, std::span<const double> irrelevant_ards,
                          std::size_t grid_size) {
  if (pirated_ards.empty() || irrelevant_ards.empty()) throw ValidationError("ARUC needs both suspect populations");
  if (grid_size < 2) throw ValidationError("ARUC grid needs at least 2 points");
  ARUCResult r;
  r.thresholds.reserve(grid_size);
  const double np = static_cast<double>(pirated_ards.size());
  const double ni = static_cast<double>(irrelevant_ards.size());
  for (std::size_t i = 1; i <= grid_size; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(grid_size + 1);
    const auto above = std::count_if(pirated_ards.begin(), pirated_ards.end(), [t](double a) { return a > t; });
    const auto below = std::count_if(irrelevant_ards.begin(), irrelevant_ards.end(), [t](double a) { return a <= t; });
    r.thresholds.push_back(t);
    r.robustness.push_back(static_cast<double>(above) / np);
    r.uniqueness.push_back(static_cast<double>(below) / ni);
  }
  auto m = [&](std::size_t i) { return std::min(r.robustness[i], r.uniqueness[i]); };
  double area = r.thresholds.front() * m(0) + (1.0 - r.thresholds.back()) * m(grid_size - 1);
  for (std::size_t i = 1; i < grid_size; ++i) {
    area += 0.5 * (m(i - 1) + m(i)) * (r.thresholds[i] - r.thresholds[i - 1]);
  }
  r.aruc = std::clamp(area, 0.0, 1.0);
  return r;
}

double label_matching_rate(std::span<const std::int64_t> a, std::span<const std::int64_t> b) {
  if (a.size() != b.size() || a.empty()) throw ValidationError("label lists must be non-empty and equally long");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

double label_matching_rate(LabelOracle& a, LabelOracle& b, const torch::Tensor& examples) {
  std::vector<Query> queries;
  for (std::int64_t i = 0; i < examples.size(0); ++i) {
    queries.push_back({static_cast<std::size_t>(i), InputKind::x, examples[i]});
  }
  const auto ya = a.labels(queries);
  const auto yb = b.labels(queries);
  if (ya.size() != queries.size()) throw PartialResultError("first oracle returned too few answers", ya.size());
  if (yb.size() != queries.size()) throw PartialResultError("second oracle returned too few answers", yb.size());
  return label_matching_rate(ya, yb);
}

nlohmann::json to_json(const ARDReport& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& o : r.per_pair) pairs.push_back({o.ori_mismatch ? 1 : 0, o.conf_match ? 1 : 0});
  return {{"suspect_id", r.suspect_id},
          {"k", r.k},
          {"ori_mismatches", r.ori_mismatches},
          {"conf_matches", r.conf_matches},
          {"p_ori", r.p_ori},
          {"p_conf", r.p_conf},
          {"ard", r.ard},
          {"per_pair", pairs}};
}

ARDReport ard_report_from_json(const nlohmann::json& j) {
  try {
    ARDReport r;
    r.suspect_id = j.at("suspect_id").get<std::string>();
    r.k = j.at("k").get<std::size_t>();
    r.ori_mismatches = j.at("ori_mismatches").get<std::size_t>();
    r.conf_matches = j.at("conf_matches").get<std::size_t>();
    r.p_ori = j.at("p_ori").get<double>();
    r.p_conf = j.at("p_conf").get<double>();
    r.ard = j.at("ard").get<double>();
    for (const auto& p : j.at("per_pair")) r.per_pair.push_back({p.at(0).get<int>() != 0, p.at(1).get<int>() != 0});
    if (r.per_pair.size() != r.k) throw IntegrityError("per_pair", "length differs from k");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("ard_report", e.what());
  }
}

nlohmann::json to_json(const ARUCResult& r) {
  return {{"grid_size", r.thresholds.size()},
          {"aruc", r.aruc},
          {"thresholds", r.thresholds},
          {"robustness", r.robustness},
          {"uniqueness", r.uniqueness}};
}

void write_curves_csv(const std::filesystem::path& path, const ARUCResult& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "threshold,robustness,uniqueness\n";
  char buf[96];
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f\n", r.thresholds[i], r.robustness[i], r.uniqueness[i]);
    out << buf;
  }
}

}  // namespace ganfinger
