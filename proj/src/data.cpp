#include "crossval/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "crossval/errors.hpp"
#include "crossval/parallel.hpp"

namespace crossval {

std::string to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::binary: return "binary";
    case OutcomeKind::continuous: return "continuous";
    case OutcomeKind::survival: return "survival";
  }
  return "?";
}

OutcomeKind outcome_kind_from_string(const std::string& s) {
  if (s == "binary") return OutcomeKind::binary;
  if (s == "continuous") return OutcomeKind::continuous;
  if (s == "survival") return OutcomeKind::survival;
  throw ConfigError("unknown outcome kind '" + s + "'");
}

OutcomeVector OutcomeVector::binary(Eigen::VectorXd y) {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0)
      throw DataError("binary outcome must be 0 or 1, got " + std::to_string(y[i]) +
                      " at row " + std::to_string(i + 1));
  }
  OutcomeVector out;
  out.kind_ = OutcomeKind::binary;
  out.values_ = std::move(y);
  return out;
}

OutcomeVector OutcomeVector::continuous(Eigen::VectorXd y) {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i]))
      throw DataError("non-finite outcome at row " + std::to_string(i + 1));
  }
  OutcomeVector out;
  out.kind_ = OutcomeKind::continuous;
  out.values_ = std::move(y);
  return out;
}

OutcomeVector OutcomeVector::survival(Eigen::VectorXd time, std::vector<uint8_t> event) {
  if (time.size() != static_cast<Eigen::Index>(event.size()))
    throw DataError("survival time/event length mismatch");
  for (Eigen::Index i = 0; i < time.size(); ++i) {
    if (!(time[i] > 0.0) || !std::isfinite(time[i]))
      throw DataError("survival time must be strictly positive and finite at row " +
                      std::to_string(i + 1));
  }
  OutcomeVector out;
  out.kind_ = OutcomeKind::survival;
  out.values_ = std::move(time);
  out.events_ = std::move(event);
  return out;
}

const std::vector<uint8_t>& OutcomeVector::events() const {
  if (kind_ != OutcomeKind::survival)
    throw DataError("events() requires a survival outcome");
  return events_;
}

OutcomeVector OutcomeVector::rows(const std::vector<int>& idx) const {
  OutcomeVector out;
  out.kind_ = kind_;
  out.values_.resize(static_cast<Eigen::Index>(idx.size()));
  for (size_t i = 0; i < idx.size(); ++i) out.values_[static_cast<Eigen::Index>(i)] = values_[idx[i]];
  if (kind_ == OutcomeKind::survival) {
    out.events_.reserve(idx.size());
    for (int r : idx) out.events_.push_back(events_[static_cast<size_t>(r)]);
  }
  return out;
}

OutcomeVector OutcomeVector::concat(const std::vector<const OutcomeVector*>& parts) {
  if (parts.empty()) throw DataError("cannot concatenate zero outcome vectors");
  OutcomeKind kind = parts.front()->kind();
  Eigen::Index total = 0;
  for (const auto* part : parts) {
    if (part->kind() != kind)
      throw DataError("mismatched outcome kinds across combined studies: " +
                      to_string(kind) + " vs " + to_string(part->kind()));
    total += part->size();
  }
  OutcomeVector out;
  out.kind_ = kind;
  out.values_.resize(total);
  Eigen::Index at = 0;
  for (const auto* part : parts) {
    out.values_.segment(at, part->size()) = part->values();
    if (kind == OutcomeKind::survival)
      out.events_.insert(out.events_.end(), part->events_.begin(), part->events_.end());
    at += part->size();
  }
  return out;
}

void StudyDataset::validate() const {
  if (n() < 1) throw DataError("study '" + id + "': needs at least one row");
  if (outcome.size() != n())
    throw DataError("study '" + id + "': outcome length " + std::to_string(outcome.size()) +
                    " != row count " + std::to_string(n()));
  if (static_cast<Eigen::Index>(feature_names.size()) != p())
    throw DataError("study '" + id + "': feature name count mismatch");
  std::unordered_set<std::string> seen;
  for (const auto& name : feature_names) {
    if (!seen.insert(name).second)
      throw DataError("study '" + id + "': duplicate feature name '" + name + "'");
  }
  if (!features.allFinite())
    throw DataError("study '" + id + "': non-finite feature value");
}

StudyDataset StudyDataset::rows(const std::vector<int>& idx, std::string new_id) const {
  StudyDataset out;
  out.id = std::move(new_id);
  out.feature_names = feature_names;
  out.features.resize(static_cast<Eigen::Index>(idx.size()), p());
  for (size_t i = 0; i < idx.size(); ++i) out.features.row(static_cast<Eigen::Index>(i)) = features.row(idx[i]);
  out.outcome = outcome.rows(idx);
  return out;
}

int StudyCollection::index_of(const std::string& id) const {
  for (int i = 0; i < size(); ++i)
    if (studies[static_cast<size_t>(i)].id == id) return i;
  return -1;
}

const StudyDataset& StudyCollection::by_id(const std::string& id) const {
  int i = index_of(id);
  if (i < 0) throw DataError("unknown study id '" + id + "'");
  return studies[static_cast<size_t>(i)];
}

void StudyCollection::validate() const {
  if (size() < 2) throw DataError("collection needs at least 2 studies");
  std::unordered_set<std::string> ids;
  for (const auto& study : studies) {
    study.validate();
    if (!ids.insert(study.id).second)
      throw DataError("duplicate study id '" + study.id + "'");
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_number(const std::string& raw, const std::string& file, int line_no,
                    const std::string& column) {
  std::string s = trim(raw);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value))
    throw DataError(file + ":" + std::to_string(line_no) + ": column '" + column +
                    "': cannot parse numeric value '" + raw + "'");
  return value;
}

StudyDataset load_one_study(const std::filesystem::path& path, OutcomeKind kind) {
  std::ifstream in(path);
  const std::string file = path.string();
  if (!in) throw DataError("cannot open study file '" + file + "'");

  std::string header_line;
  if (!std::getline(in, header_line))
    throw DataError(file + ":1: empty file, expected a header row");
  std::vector<std::string> header = split_csv_line(header_line);
  for (auto& name : header) name = trim(name);

  int outcome_cols = (kind == OutcomeKind::survival) ? 2 : 1;
  if (static_cast<int>(header.size()) < outcome_cols + 1)
    throw DataError(file + ":1: header needs outcome column(s) plus at least one feature");
  if (kind == OutcomeKind::survival) {
    if (header[0] != "time" || header[1] != "event")
      throw DataError(file + ":1: survival studies must start with columns 'time,event'");
  } else {
    if (header[0] != "outcome")
      throw DataError(file + ":1: outcome column absent (first column must be 'outcome')");
  }

  std::vector<std::string> feature_names(header.begin() + outcome_cols, header.end());
  const int p = static_cast<int>(feature_names.size());

  std::vector<double> y_raw, time_raw;
  std::vector<uint8_t> events;
  std::vector<double> feat_raw;
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != outcome_cols + p)
      throw DataError(file + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(outcome_cols + p) + " cells, found " +
                      std::to_string(cells.size()));
    if (kind == OutcomeKind::survival) {
      time_raw.push_back(parse_number(cells[0], file, line_no, "time"));
      double ev = parse_number(cells[1], file, line_no, "event");
      if (ev != 0.0 && ev != 1.0)
        throw DataError(file + ":" + std::to_string(line_no) + ": event must be 0 or 1");
      events.push_back(ev != 0.0);
    } else {
      y_raw.push_back(parse_number(cells[0], file, line_no, "outcome"));
    }
    for (int j = 0; j < p; ++j)
      feat_raw.push_back(parse_number(cells[outcome_cols + j], file, line_no, feature_names[static_cast<size_t>(j)]));
  }
  const int n = static_cast<int>(kind == OutcomeKind::survival ? time_raw.size() : y_raw.size());
  if (n == 0) throw DataError(file + ": no data rows");

  StudyDataset study;
  study.id = path.stem().string();
  study.feature_names = std::move(feature_names);
  study.features.resize(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) study.features(i, j) = feat_raw[static_cast<size_t>(i) * p + j];
  try {
    switch (kind) {
      case OutcomeKind::binary:
        study.outcome = OutcomeVector::binary(Eigen::Map<Eigen::VectorXd>(y_raw.data(), n));
        break;
      case OutcomeKind::continuous:
        study.outcome = OutcomeVector::continuous(Eigen::Map<Eigen::VectorXd>(y_raw.data(), n));
        break;
      case OutcomeKind::survival:
        study.outcome = OutcomeVector::survival(Eigen::Map<Eigen::VectorXd>(time_raw.data(), n),
                                                std::move(events));
        break;
    }
  } catch (const DataError& e) {
    throw DataError(file + ": " + e.what());
  }
  study.validate();
  return study;
}

}  // namespace

StudyCollection load_studies(const std::vector<std::filesystem::path>& paths,
                             OutcomeKind kind, int workers) {
  if (paths.empty()) throw DataError("no study paths given");
  StudyCollection collection;
  collection.studies.resize(paths.size());
  parallel_for(static_cast<int>(paths.size()), workers, [&](int i) {
    collection.studies[static_cast<size_t>(i)] = load_one_study(paths[static_cast<size_t>(i)], kind);
  });
  std::unordered_set<std::string> ids;
  for (const auto& study : collection.studies)
    if (!ids.insert(study.id).second)
      throw DataError("duplicate study id '" + study.id + "' across input files");
  return collection;
}

StudyCollection align_features(const StudyCollection& collection) {
  if (collection.size() < 2) throw DataError("alignment needs at least 2 studies");
  // intersection, ordered as in study 1
  std::vector<std::string> shared;
  for (const auto& name : collection.studies.front().feature_names) {
    bool everywhere = true;
    for (const auto& study : collection.studies) {
      if (std::find(study.feature_names.begin(), study.feature_names.end(), name) ==
          study.feature_names.end()) {
        everywhere = false;
        break;
      }
    }
    if (everywhere) shared.push_back(name);
  }
  if (shared.empty()) {
    std::string counts;
    for (const auto& study : collection.studies)
      counts += " " + study.id + ":" + std::to_string(study.feature_names.size());
    throw DataError("empty feature intersection across studies; per-study feature counts:" + counts);
  }

  StudyCollection out;
  out.shared_features = shared;
  out.studies.reserve(collection.studies.size());
  for (const auto& study : collection.studies) {
    StudyDataset aligned;
    aligned.id = study.id;
    aligned.feature_names = shared;
    aligned.outcome = study.outcome;
    aligned.features.resize(study.n(), static_cast<Eigen::Index>(shared.size()));
    std::unordered_map<std::string, int> pos;
    for (int j = 0; j < static_cast<int>(study.feature_names.size()); ++j)
      pos[study.feature_names[static_cast<size_t>(j)]] = j;
    for (size_t j = 0; j < shared.size(); ++j)
      aligned.features.col(static_cast<Eigen::Index>(j)) = study.features.col(pos.at(shared[j]));
    out.studies.push_back(std::move(aligned));
  }
  out.validate();
  return out;
}

StudyDataset subsample(const StudyDataset& study, int j, RngStream& rng) {
  if (j < 1) throw DataError("subsample size must be positive");
  if (j > study.n())
    throw DataError("subsample size " + std::to_string(j) + " exceeds study '" + study.id +
                    "' size " + std::to_string(study.n()));
  std::vector<int> idx = rng.sample_without_replacement(static_cast<int>(study.n()), j);
  return study.rows(idx, study.id + "#sub" + std::to_string(j));
}

StudyDataset combine(const StudyCollection& collection, const std::vector<std::string>& B,
                     const std::optional<std::string>& exclude) {
  if (B.empty()) throw DataError("combine: empty study set B");
  // effective members in collection order
  std::set<std::string> members(B.begin(), B.end());
  for (const auto& id : members)
    if (collection.index_of(id) < 0) throw DataError("combine: unknown study id '" + id + "'");
  if (exclude) members.erase(*exclude);
  if (members.empty())
    throw DataError("combine: effective training set is empty (B = {" + *exclude + "})");

  std::vector<const StudyDataset*> parts;
  std::string synthetic_id = "combined[";
  for (const auto& study : collection.studies) {
    if (members.count(study.id)) {
      parts.push_back(&study);
      if (parts.size() > 1) synthetic_id += "+";
      synthetic_id += study.id;
    }
  }
  synthetic_id += "]";

  const auto& names = parts.front()->feature_names;
  Eigen::Index total = 0;
  for (const auto* part : parts) {
    if (part->feature_names != names)
      throw DataError("combine: studies are not feature-aligned (run align_features first)");
    total += part->n();
  }

  StudyDataset out;
  out.id = synthetic_id;
  out.feature_names = names;
  out.features.resize(total, parts.front()->p());
  Eigen::Index at = 0;
  std::vector<const OutcomeVector*> outcome_parts;
  for (const auto* part : parts) {
    out.features.middleRows(at, part->n()) = part->features;
    outcome_parts.push_back(&part->outcome);
    at += part->n();
  }
  out.outcome = OutcomeVector::concat(outcome_parts);
  return out;
}

}  // namespace crossval
