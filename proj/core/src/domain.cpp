#include "nextmin/domain.hpp"

#include <algorithm>
#include <cmath>

#include "nextmin/error.hpp"
#include "nextmin/random.hpp"

namespace nextmin {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::validation: return "validation";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::io: return "io";
    case ErrorCode::corrupt: return "corrupt";
    case ErrorCode::version_mismatch: return "version_mismatch";
    case ErrorCode::catalog_mismatch: return "catalog_mismatch";
    case ErrorCode::numeric: return "numeric";
    case ErrorCode::state: return "state";
    case ErrorCode::end_of_case: return "end_of_case";
  }
  return "unknown";
}

ActivityCatalog::ActivityCatalog(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.empty()) {
    throw Error(ErrorCode::validation, "activity catalog is empty");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i].empty()) {
      throw Error(ErrorCode::validation, "activity name at index " + std::to_string(i) + " is empty");
    }
    if (!index_.emplace(labels_[i], i).second) {
      throw Error(ErrorCode::validation, "duplicate activity name '" + labels_[i] + "'");
    }
  }
}

const std::string& ActivityCatalog::name(std::size_t index) const {
  if (index >= labels_.size()) {
    throw Error(ErrorCode::not_found, "label index " + std::to_string(index) + " out of range");
  }
  return labels_[index];
}

std::optional<std::size_t> ActivityCatalog::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t ActivityCatalog::hash() const noexcept {
  std::uint64_t h = fnv1a("");
  for (const auto& label : labels_) {
    h = fnv1a(label, h);
    h = fnv1a("\n", h);
  }
  return h;
}

std::optional<std::size_t> label_index(const ActivityCatalog& catalog, std::string_view name) {
  return catalog.index_of(name);
}

Vocabulary::Vocabulary(std::vector<std::string> values) : values_(std::move(values)) {
  if (values_.empty() || values_.back() != kMissingToken) {
    throw Error(ErrorCode::validation, "vocabulary must end with the 'missing' token");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i].empty()) throw Error(ErrorCode::validation, "empty vocabulary value");
    for (std::size_t j = 0; j < i; ++j) {
      if (values_[i] == values_[j]) {
        throw Error(ErrorCode::validation, "duplicate vocabulary value '" + values_[i] + "'");
      }
    }
  }
}

std::optional<std::size_t> Vocabulary::index_of(std::string_view value) const {
  auto it = std::find(values_.begin(), values_.end(), value);
  if (it == values_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - values_.begin());
}

DatasetManifest DatasetManifest::make(ActivityCatalog catalog, Vocabulary injury_type,
                                      Vocabulary fio2) {
  DatasetManifest m;
  m.catalog = std::move(catalog);
  m.injury_type = std::move(injury_type);
  m.fio2 = std::move(fio2);
  for (const auto& f : kStaticNumericFields) m.static_numeric.emplace_back(f.name);
  for (const auto& f : kDynamicNumericFields) m.dynamic_numeric.emplace_back(f.name);
  return m;
}

namespace {

void fail(const CaseLog& c, const std::string& what) {
  throw Error(ErrorCode::validation, "case '" + c.case_id + "': " + what);
}

template <class Record, std::size_t N>
void check_finite(const CaseLog& c, const Record& r,
                  const std::array<NumericField<Record>, N>& fields, std::string_view where) {
  for (const auto& f : fields) {
    const auto& v = r.*(f.member);
    if (v && !std::isfinite(*v)) {
      fail(c, std::string(where) + "." + std::string(f.name) + " is not finite");
    }
  }
}

}  // namespace

CaseLog validate_case(CaseLog c, const ActivityCatalog& catalog) {
  if (c.case_id.empty()) fail(c, "case_id is empty");
  if (c.duration_s <= 0) fail(c, "duration_s must be positive");
  check_finite(c, c.static_context, kStaticNumericFields, "static");
  for (const auto& r : c.vitals) {
    if (r.t_s < 0) fail(c, "vitals record has negative time");
    check_finite(c, r, kDynamicNumericFields, "vitals");
  }
  for (std::size_t i = 0; i < c.events.size(); ++i) {
    const auto& e = c.events[i];
    const std::string at = "event " + std::to_string(i) + ": ";
    if (e.label >= catalog.size()) fail(c, at + "unknown label id " + std::to_string(e.label));
    if (e.start_s < 0) fail(c, at + "negative start time");
    if (e.end_s < e.start_s) fail(c, at + "event interval inverted");
    if (e.end_s > c.duration_s) fail(c, at + "event beyond case duration");
  }
  std::stable_sort(c.vitals.begin(), c.vitals.end(),
                   [](const auto& a, const auto& b) { return a.t_s < b.t_s; });
  return c;
}

CaseLog validate_case(CaseLog c, const DatasetManifest& manifest) {
  c = validate_case(std::move(c), manifest.catalog);
  const auto& injury = c.static_context.injury_type;
  if (injury && !manifest.injury_type.contains(*injury)) {
    fail(c, "injury_type '" + *injury + "' not in vocabulary");
  }
  for (const auto& r : c.vitals) {
    if (r.fio2 && !manifest.fio2.contains(*r.fio2)) {
      fail(c, "fio2 '" + *r.fio2 + "' not in vocabulary");
    }
  }
  return c;
}

LabelVector label_minute(std::span<const ActivityEvent> events, std::int64_t minute,
                         std::size_t n_labels) {
  LabelVector bits(n_labels, 0);
  const std::int64_t lo = 60 * minute;
  const std::int64_t hi = lo + 60;
  for (const auto& e : events) {
    if (e.start_s < hi && e.end_s >= lo && e.label < n_labels) bits[e.label] = 1;
  }
  return bits;
}

}  // namespace nextmin
