#include "nextmin/features.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <numeric>

#include "nextmin/error.hpp"

namespace nextmin {

namespace {

struct RangeAccumulator {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  bool seen = false;

  void add(const std::optional<double>& v) {
    if (!v) return;
    lo = std::min(lo, *v);
    hi = std::max(hi, *v);
    seen = true;
  }

  FeatureRange result() const {
    if (!seen) return {0.0, 0.0, true};
    return {lo, hi, false};
  }
};

bool recency_order(const ActivityEvent& a, const ActivityEvent& b) {
  if (a.start_s != b.start_s) return a.start_s > b.start_s;
  return a.label < b.label;
}

}  // namespace

NormalizerStats fit_normalizer(std::span<const CaseLog> train_cases,
                               std::optional<double> duration_cap_minutes) {
  if (train_cases.empty()) {
    throw Error(ErrorCode::invalid_argument, "fit_normalizer needs at least one training case");
  }
  std::array<RangeAccumulator, kStaticNumericFields.size()> stat{};
  std::array<RangeAccumulator, kDynamicNumericFields.size()> dyn{};
  double longest_minutes = 0.0;
  for (const auto& c : train_cases) {
    for (std::size_t f = 0; f < kStaticNumericFields.size(); ++f) {
      stat[f].add(c.static_context.*(kStaticNumericFields[f].member));
    }
    for (const auto& r : c.vitals) {
      for (std::size_t f = 0; f < kDynamicNumericFields.size(); ++f) {
        dyn[f].add(r.*(kDynamicNumericFields[f].member));
      }
    }
    longest_minutes = std::max(longest_minutes, static_cast<double>(c.duration_s) / 60.0);
  }
  NormalizerStats stats;
  for (const auto& a : stat) stats.static_numeric.push_back(a.result());
  for (const auto& a : dyn) stats.dynamic_numeric.push_back(a.result());
  if (duration_cap_minutes) longest_minutes = std::min(longest_minutes, *duration_cap_minutes);
  stats.timestamp = {0.0, longest_minutes, false};
  return stats;
}

double scale_numeric(double x, const FeatureRange& range) {
  if (!std::isfinite(x)) throw Error(ErrorCode::numeric, "cannot scale a non-finite value");
  if (!(range.max > range.min)) return 0.0;
  return std::clamp((x - range.min) / (range.max - range.min), 0.0, 1.0);
}

std::vector<double> encode_one_hot(const std::optional<std::string>& value,
                                   const Vocabulary& vocabulary) {
  std::vector<double> out(vocabulary.size(), 0.0);
  if (!value) {
    out[vocabulary.missing_index()] = 1.0;
    return out;
  }
  auto idx = vocabulary.index_of(*value);
  if (!idx) throw Error(ErrorCode::validation, "category '" + *value + "' not in vocabulary");
  out[*idx] = 1.0;
  return out;
}

const DynamicContextRecord* carry_forward_vitals(std::span<const DynamicContextRecord> vitals,
                                                 std::int64_t cutoff_s) {
  auto it = std::upper_bound(vitals.begin(), vitals.end(), cutoff_s,
                             [](std::int64_t t, const DynamicContextRecord& r) { return t < r.t_s; });
  if (it == vitals.begin()) return nullptr;
  return &*std::prev(it);
}

std::vector<std::uint32_t> select_last_k(std::span<const ActivityEvent> events,
                                         std::int64_t cutoff_s, std::size_t k, Rng& rng) {
  if (k == 0) throw Error(ErrorCode::invalid_argument, "k must be at least 1");
  std::vector<ActivityEvent> past;
  for (const auto& e : events) {
    if (e.start_s < cutoff_s) past.push_back(e);
  }
  std::sort(past.begin(), past.end(), recency_order);

  const auto in_window = std::count_if(past.begin(), past.end(), [&](const ActivityEvent& e) {
    return e.start_s >= cutoff_s - 60;
  });
  std::vector<ActivityEvent> chosen;
  if (static_cast<std::size_t>(in_window) > k) {
    // std::sample keeps the relative (recency) order of the selection.
    std::sample(past.begin(), past.begin() + in_window, std::back_inserter(chosen), k, rng);
  } else {
    chosen.assign(past.begin(), past.begin() + std::min(k, past.size()));
  }

  std::vector<std::uint32_t> ids(k, kPadId);
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    ids[i] = ActivityCatalog::embedding_id(chosen[i].label);
  }
  return ids;
}

std::vector<std::uint8_t> long_range_vector(std::span<const ActivityEvent> events,
                                            std::int64_t cutoff_s, std::size_t n_labels) {
  std::vector<std::uint8_t> bits(n_labels, 0);
  for (const auto& e : events) {
    if (e.start_s < cutoff_s && e.label < n_labels) bits[e.label] = 1;
  }
  return bits;
}

// ---------------------------------------------------------------------------

namespace {

struct MaskBlock {
  std::string_view name;
  bool ContextMask::*flag;
};

constexpr std::array<MaskBlock, 5> kMaskBlocks{{
    {"last_k", &ContextMask::use_last_k},
    {"all_occurred", &ContextMask::use_all_occurred},
    {"dynamic", &ContextMask::use_dynamic},
    {"static", &ContextMask::use_static},
    {"timestamp", &ContextMask::use_timestamp},
}};

}  // namespace

ContextMask ContextMask::parse(std::string_view text) {
  if (text == "all") return all();
  ContextMask mask = none();
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto next = text.find_first_of(",+", pos);
    if (next == std::string_view::npos) next = text.size();
    auto token = text.substr(pos, next - pos);
    auto it = std::find_if(kMaskBlocks.begin(), kMaskBlocks.end(),
                           [&](const MaskBlock& b) { return b.name == token; });
    if (it == kMaskBlocks.end()) {
      throw Error(ErrorCode::invalid_argument, "unknown context block '" + std::string(token) + "'");
    }
    mask.*(it->flag) = true;
    pos = next + 1;
  }
  return mask;
}

std::string ContextMask::to_string() const {
  std::string out;
  for (const auto& b : kMaskBlocks) {
    if (!(this->*(b.flag))) continue;
    if (!out.empty()) out += '+';
    out += b.name;
  }
  return out.empty() ? "none" : out;
}

InputLayout input_layout(const ContextMask& mask, std::size_t static_width,
                         std::size_t dynamic_width, std::size_t n_labels, std::size_t k) {
  if (!mask.any()) throw Error(ErrorCode::invalid_argument, "context mask selects no features");
  InputLayout layout;
  if (mask.use_static) layout.head_width += static_width;
  if (mask.use_dynamic) layout.head_width += dynamic_width;
  if (mask.use_all_occurred) layout.tail_width += n_labels;
  if (mask.use_timestamp) layout.tail_width += 1;
  layout.k = mask.use_last_k ? k : 0;
  return layout;
}

FeatureBundle assemble_features(const Sample& s, const ContextMask& mask) {
  if (!mask.any()) throw Error(ErrorCode::invalid_argument, "context mask selects no features");
  FeatureBundle b;
  auto append = [&](const auto& block) { b.dense.insert(b.dense.end(), block.begin(), block.end()); };
  if (mask.use_static) append(s.static_vec);
  if (mask.use_dynamic) append(s.dynamic_vec);
  if (mask.use_last_k) b.ids = s.last_k_ids;
  if (mask.use_all_occurred) append(s.long_range_vec);
  if (mask.use_timestamp) b.dense.push_back(s.timestamp_scalar);
  return b;
}

// ---------------------------------------------------------------------------

FeatureEncoder::FeatureEncoder(DatasetManifest manifest, NormalizerStats stats, std::size_t k,
                               std::uint64_t seed)
    : manifest_(std::move(manifest)), stats_(std::move(stats)), k_(k), seed_(seed) {
  if (k_ == 0) throw Error(ErrorCode::invalid_argument, "k must be at least 1");
  if (stats_.static_numeric.size() != kStaticNumericFields.size() ||
      stats_.dynamic_numeric.size() != kDynamicNumericFields.size()) {
    throw Error(ErrorCode::invalid_argument, "normalizer stats do not match the feature schema");
  }
}

std::size_t FeatureEncoder::static_width() const noexcept {
  return kStaticNumericFields.size() + manifest_.injury_type.size();
}

std::size_t FeatureEncoder::dynamic_width() const noexcept {
  return kDynamicNumericFields.size() + manifest_.fio2.size();
}

std::vector<double> FeatureEncoder::encode_static(const StaticContext& s) const {
  std::vector<double> out;
  out.reserve(static_width());
  for (std::size_t f = 0; f < kStaticNumericFields.size(); ++f) {
    const auto& v = s.*(kStaticNumericFields[f].member);
    out.push_back(v ? scale_numeric(*v, stats_.static_numeric[f]) : 0.0);
  }
  auto hot = encode_one_hot(s.injury_type, manifest_.injury_type);
  out.insert(out.end(), hot.begin(), hot.end());
  return out;
}

std::vector<double> FeatureEncoder::encode_dynamic(const DynamicContextRecord* r) const {
  std::vector<double> out;
  out.reserve(dynamic_width());
  for (std::size_t f = 0; f < kDynamicNumericFields.size(); ++f) {
    const std::optional<double> v = r ? r->*(kDynamicNumericFields[f].member) : std::nullopt;
    out.push_back(v ? scale_numeric(*v, stats_.dynamic_numeric[f]) : 0.0);
  }
  auto hot = encode_one_hot(r ? r->fio2 : std::nullopt, manifest_.fio2);
  out.insert(out.end(), hot.begin(), hot.end());
  return out;
}

Sample FeatureEncoder::encode_minute(std::string_view case_id, const StaticContext& static_context,
                                     std::span<const DynamicContextRecord> vitals,
                                     std::span<const ActivityEvent> events,
                                     std::int64_t minute) const {
  if (minute < 0) throw Error(ErrorCode::invalid_argument, "minute must be non-negative");
  const std::int64_t cutoff = 60 * minute;
  Sample s;
  s.case_id = std::string(case_id);
  s.minute = minute;
  s.static_vec = encode_static(static_context);
  s.dynamic_vec = encode_dynamic(carry_forward_vitals(vitals, cutoff));
  Rng rng(derive_seed(seed_, case_id, static_cast<std::uint64_t>(minute)));
  s.last_k_ids = select_last_k(events, cutoff, k_, rng);
  s.long_range_vec = long_range_vector(events, cutoff, n_labels());
  s.timestamp_scalar = scale_numeric(static_cast<double>(minute), stats_.timestamp);
  return s;
}

std::vector<Sample> FeatureEncoder::sample_case(const CaseLog& c) const {
  std::vector<Sample> out;
  const auto minutes = c.minutes();
  out.reserve(static_cast<std::size_t>(minutes));
  for (std::int64_t t = 0; t < minutes; ++t) {
    auto s = encode_minute(c.case_id, c.static_context, c.vitals, c.events, t);
    s.label = label_minute(c.events, t, n_labels());
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> sample_case(const CaseLog& c, const DatasetManifest& manifest,
                                const NormalizerStats& stats, std::size_t k, std::uint64_t seed) {
  return FeatureEncoder(manifest, stats, k, seed).sample_case(c);
}

// ---------------------------------------------------------------------------

DatasetSplit split_cases(std::span<const CaseLog> cases, std::array<unsigned, 3> ratio,
                         std::uint64_t seed) {
  if (std::any_of(ratio.begin(), ratio.end(), [](unsigned r) { return r == 0; })) {
    throw Error(ErrorCode::invalid_argument, "split ratio parts must be positive");
  }
  if (cases.size() < ratio.size()) {
    throw Error(ErrorCode::invalid_argument, "need at least 3 cases to split, got " +
                                                 std::to_string(cases.size()));
  }
  std::vector<std::size_t> order(cases.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t total_ratio = ratio[0] + ratio[1] + ratio[2];
  const std::size_t n = cases.size();
  auto part = [&](unsigned r) { return std::max<std::size_t>(1, n * r / total_ratio); };
  const std::size_t n_val = part(ratio[1]);
  const std::size_t n_test = part(ratio[2]);
  if (n_val + n_test >= n) {
    throw Error(ErrorCode::invalid_argument, "split leaves no training cases");
  }
  const std::size_t n_train = n - n_val - n_test;

  DatasetSplit split;
  split.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& id = cases[order[i]].case_id;
    if (i < n_train) split.train.push_back(id);
    else if (i < n_train + n_val) split.validation.push_back(id);
    else split.test.push_back(id);
  }
  return split;
}

Batch Dataset::batch(std::span<const std::size_t> rows) const {
  Batch b;
  b.dense = Matrix(rows.size(), dense.cols());
  b.ids.resize(rows.size() * layout.k);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = dense.row(rows[i]);
    std::copy(src.begin(), src.end(), b.dense.row(i).begin());
    std::copy_n(ids.begin() + static_cast<std::ptrdiff_t>(rows[i] * layout.k), layout.k,
                b.ids.begin() + static_cast<std::ptrdiff_t>(i * layout.k));
  }
  return b;
}

Batch Dataset::all() const { return Batch{dense, ids}; }

LabelMatrix Dataset::label_rows(std::span<const std::size_t> rows) const {
  LabelMatrix out(rows.size(), labels.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = labels.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Dataset build_dataset(std::span<const Sample> samples, const ContextMask& mask,
                      const InputLayout& layout) {
  Dataset d;
  d.layout = layout;
  const std::size_t n_labels = samples.empty() ? 0 : samples.front().label.size();
  d.dense = Matrix(samples.size(), layout.dense_width());
  d.ids.reserve(samples.size() * layout.k);
  d.labels = LabelMatrix(samples.size(), n_labels);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    auto bundle = assemble_features(s, mask);
    if (bundle.dense.size() != layout.dense_width() || bundle.ids.size() != layout.k) {
      throw Error(ErrorCode::invalid_argument, "sample width does not match the input layout");
    }
    if (s.label.size() != n_labels) {
      throw Error(ErrorCode::invalid_argument, "sample label width mismatch");
    }
    std::copy(bundle.dense.begin(), bundle.dense.end(), d.dense.row(i).begin());
    d.ids.insert(d.ids.end(), bundle.ids.begin(), bundle.ids.end());
    std::copy(s.label.begin(), s.label.end(), d.labels.row(i).begin());
    d.case_ids.push_back(s.case_id);
    d.minutes.push_back(s.minute);
  }
  return d;
}

Batch make_batch(std::span<const FeatureBundle> bundles, const InputLayout& layout) {
  Batch b;
  b.dense = Matrix(bundles.size(), layout.dense_width());
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    if (bundles[i].dense.size() != layout.dense_width() || bundles[i].ids.size() != layout.k) {
      throw Error(ErrorCode::invalid_argument, "feature bundle does not match the input layout");
    }
    std::copy(bundles[i].dense.begin(), bundles[i].dense.end(), b.dense.row(i).begin());
    b.ids.insert(b.ids.end(), bundles[i].ids.begin(), bundles[i].ids.end());
  }
  return b;
}

}  // namespace nextmin
