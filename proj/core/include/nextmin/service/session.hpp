#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "nextmin/checkpoint.hpp"
#include "nextmin/domain_io.hpp"
#include "nextmin/harness.hpp"

namespace nextmin::service {

/// A calibrated model shared read-only by all sessions.
struct LoadedModel {
  std::string id;
  std::filesystem::path path;
  ModelBundle bundle;
  FeatureEncoder encoder;
  /// Test report used to filter timeline exports, if one was supplied.
  std::optional<EvalReport> report;
};

enum class SessionMode { replay, live };
std::string_view to_string(SessionMode m) noexcept;

struct PredictionFrame {
  std::string session_id;
  std::int64_t minute = 0;
  std::vector<double> probabilities;
  std::vector<double> thresholds;
  std::vector<std::size_t> predicted;
  /// Replay mode only.
  std::optional<std::vector<std::size_t>> truth;
  std::optional<std::vector<Outcome>> outcomes;
  /// The exact model input of this frame.
  FeatureBundle features;
};

Json frame_to_json(const PredictionFrame& f);

/// What-if edit. Vitals edits hold from `effective_minute` on; static edits
/// replace fields outright; injected events join the process context;
/// suppression hides one source event from the process context only.
struct Override {
  enum class Kind { vitals, static_context, inject_event, suppress_event };

  std::uint64_t id = 0;
  Kind kind = Kind::vitals;
  std::int64_t effective_minute = 0;
  std::map<std::string, double> numeric;
  std::optional<std::string> category;
  ActivityEvent event;
  std::size_t event_index = 0;
};

Json override_to_json(const Override& o, const ActivityCatalog& catalog);
/// Parses a request body; `current_minute` fills a missing effective_minute.
Override override_from_json(const Json& j, const DatasetManifest& manifest, std::int64_t current_minute);

class Session;

/// Cursor over a session's frames. Starts at the first frame, so a late
/// subscriber still sees every frame once and in order.
class FrameSubscription {
 public:
  /// Next frame, or nullopt once the session is closed and drained or the
  /// timeout passes (check `closed()` to tell them apart).
  std::optional<PredictionFrame> next(std::chrono::milliseconds timeout);
  bool closed() const;

 private:
  friend class Session;
  explicit FrameSubscription(std::shared_ptr<Session> session) : session_(std::move(session)) {}

  std::shared_ptr<Session> session_;
  std::size_t cursor_ = 0;
};

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(std::string id, std::shared_ptr<const LoadedModel> model, SessionMode mode,
          std::optional<CaseLog> source, StaticContext live_static);

  const std::string& id() const noexcept { return id_; }
  SessionMode mode() const noexcept { return mode_; }
  std::int64_t minute() const;
  const LoadedModel& model() const noexcept { return *model_; }

  /// Frame for the current minute, then advances by one. Throws
  /// Error(end_of_case) past the end of a replay, Error(state) when closed.
  PredictionFrame tick();

  Override apply_override(Override o);
  void remove_override(std::uint64_t override_id);
  std::vector<Override> overrides() const;

  /// Live mode only.
  void record_event(std::string_view activity, std::int64_t start_s, std::int64_t end_s);
  void record_vitals(DynamicContextRecord record);

  std::vector<PredictionFrame> frames(std::size_t since = 0) const;
  FrameSubscription subscribe();
  void close();
  bool closed() const;

  Json describe() const;

 private:
  friend class FrameSubscription;

  /// Context as seen at the current minute, with overrides applied.
  StaticContext effective_static() const;
  std::vector<DynamicContextRecord> effective_vitals() const;
  std::vector<ActivityEvent> effective_events() const;
  void check_open() const;

  std::string id_;
  std::shared_ptr<const LoadedModel> model_;
  SessionMode mode_;
  std::optional<CaseLog> source_;
  StaticContext live_static_;
  std::vector<DynamicContextRecord> live_vitals_;
  std::vector<ActivityEvent> live_events_;

  mutable std::mutex mutex_;
  std::condition_variable frame_added_;
  std::int64_t minute_ = 0;
  std::vector<Override> overrides_;
  std::uint64_t next_override_ = 1;
  std::vector<PredictionFrame> frames_;
  bool closed_ = false;
};

struct SessionRequest {
  SessionMode mode = SessionMode::replay;
  std::string model_id;
  std::string case_id;        // replay
  StaticContext static_context;  // live
};

/// Owns models, the case corpus available for replay, and sessions.
class SessionManager {
 public:
  explicit SessionManager(std::optional<Corpus> corpus = std::nullopt);

  /// Loads and verifies a checkpoint; it must carry thresholds. A report
  /// file, when given, is the test report used by timeline exports.
  std::string load_model(const std::filesystem::path& checkpoint,
                         const std::optional<std::filesystem::path>& report = std::nullopt);
  /// Registers an in-memory bundle (tests, embedding).
  std::string add_model(ModelBundle bundle, DatasetManifest manifest,
                        std::optional<EvalReport> report = std::nullopt,
                        std::filesystem::path source = {});
  std::shared_ptr<const LoadedModel> model(std::string_view id) const;
  std::vector<std::shared_ptr<const LoadedModel>> models() const;

  std::shared_ptr<Session> create_session(const SessionRequest& request);
  std::shared_ptr<Session> session(std::string_view id) const;
  std::vector<std::shared_ptr<Session>> sessions() const;
  void close_session(std::string_view id);

  const Corpus* corpus() const noexcept { return corpus_ ? &*corpus_ : nullptr; }
  const DatasetManifest* manifest() const noexcept;

  /// Timeline for a corpus case; the F1 filter uses the model's report, or an
  /// evaluation over the whole corpus when the model has none.
  TimelineExport timeline(std::string_view case_id, std::string_view model_id, double cutoff) const;

 private:
  std::optional<Corpus> corpus_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const LoadedModel>, std::less<>> models_;
  std::map<std::string, std::shared_ptr<Session>, std::less<>> sessions_;
  std::uint64_t next_model_ = 1;
  std::uint64_t next_session_ = 1;
  mutable std::map<std::string, EvalReport, std::less<>> corpus_reports_;
};

}  // namespace nextmin::service
