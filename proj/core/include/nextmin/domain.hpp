#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nextmin {

/// Embedding id reserved for padding; label index i maps to embedding id i + 1.
inline constexpr std::uint32_t kPadId = 0;

inline constexpr std::string_view kMissingToken = "missing";

/// Ordered list of activity names. The order is the label order of every
/// LabelVector and model output built against it.
class ActivityCatalog {
 public:
  ActivityCatalog() = default;
  explicit ActivityCatalog(std::vector<std::string> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& name(std::size_t index) const;
  std::optional<std::size_t> index_of(std::string_view name) const;

  static constexpr std::uint32_t embedding_id(std::size_t index) noexcept {
    return static_cast<std::uint32_t>(index + 1);
  }

  /// FNV-1a over the newline-joined names; checkpoints carry it.
  std::uint64_t hash() const noexcept;

  friend bool operator==(const ActivityCatalog& a, const ActivityCatalog& b) {
    return a.labels_ == b.labels_;
  }

 private:
  std::vector<std::string> labels_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

std::optional<std::size_t> label_index(const ActivityCatalog& catalog,
                                       std::string_view name);

/// Category values with a trailing missing token.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> values);

  std::size_t size() const noexcept { return values_.size(); }
  const std::vector<std::string>& values() const noexcept { return values_; }
  std::optional<std::size_t> index_of(std::string_view value) const;
  std::size_t missing_index() const noexcept { return values_.size() - 1; }
  bool contains(std::string_view value) const { return index_of(value).has_value(); }

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  std::vector<std::string> values_;
};

struct ActivityEvent {
  std::size_t label = 0;
  std::int64_t start_s = 0;
  std::int64_t end_s = 0;

  friend bool operator==(const ActivityEvent&, const ActivityEvent&) = default;
};

struct StaticContext {
  std::optional<double> age;
  std::optional<double> gcs;
  std::optional<double> ais;
  std::optional<double> heart_rate;
  std::optional<double> systolic_bp;
  std::optional<std::string> injury_type;

  friend bool operator==(const StaticContext&, const StaticContext&) = default;
};

struct DynamicContextRecord {
  std::int64_t t_s = 0;
  std::optional<double> heart_rate;
  std::optional<double> respiratory_rate;
  std::optional<double> systolic_bp;
  std::optional<double> diastolic_bp;
  std::optional<double> oxygen_saturation;
  std::optional<std::string> fio2;

  friend bool operator==(const DynamicContextRecord&, const DynamicContextRecord&) = default;
};

template <class Record>
struct NumericField {
  std::string_view name;
  std::optional<double> Record::*member;
};

inline constexpr std::array<NumericField<StaticContext>, 5> kStaticNumericFields{{
    {"age", &StaticContext::age},
    {"gcs", &StaticContext::gcs},
    {"ais", &StaticContext::ais},
    {"heart_rate", &StaticContext::heart_rate},
    {"systolic_bp", &StaticContext::systolic_bp},
}};

inline constexpr std::array<NumericField<DynamicContextRecord>, 5> kDynamicNumericFields{{
    {"heart_rate", &DynamicContextRecord::heart_rate},
    {"respiratory_rate", &DynamicContextRecord::respiratory_rate},
    {"systolic_bp", &DynamicContextRecord::systolic_bp},
    {"diastolic_bp", &DynamicContextRecord::diastolic_bp},
    {"oxygen_saturation", &DynamicContextRecord::oxygen_saturation},
}};

inline constexpr std::string_view kStaticCategoryField = "injury_type";
inline constexpr std::string_view kDynamicCategoryField = "fio2";

struct CaseLog {
  std::string case_id;
  StaticContext static_context;
  std::vector<DynamicContextRecord> vitals;
  std::vector<ActivityEvent> events;
  std::int64_t duration_s = 0;

  /// Number of one-minute samples the case produces.
  std::int64_t minutes() const noexcept { return (duration_s + 59) / 60; }

  friend bool operator==(const CaseLog&, const CaseLog&) = default;
};

using LabelVector = std::vector<std::uint8_t>;

/// Everything needed to interpret case files: catalog, vocabularies and the
/// numeric feature lists (which fix the feature layout).
struct DatasetManifest {
  static constexpr int kSchemaVersion = 1;

  ActivityCatalog catalog;
  Vocabulary injury_type;
  Vocabulary fio2;
  std::vector<std::string> static_numeric;
  std::vector<std::string> dynamic_numeric;

  /// Manifest with the built-in numeric feature lists.
  static DatasetManifest make(ActivityCatalog catalog, Vocabulary injury_type,
                              Vocabulary fio2);

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Checks catalog-level invariants, returns the case with vitals stably sorted
/// by time. Throws Error(validation) naming the first violation.
CaseLog validate_case(CaseLog c, const ActivityCatalog& catalog);

/// As above plus categorical values against the manifest vocabularies.
CaseLog validate_case(CaseLog c, const DatasetManifest& manifest);

/// Bits for minute [60t, 60(t+1)): an activity is on if any of its intervals
/// intersects the window.
LabelVector label_minute(std::span<const ActivityEvent> events, std::int64_t minute,
                         std::size_t n_labels);

}  // namespace nextmin
