#include "nextmin/service/session.hpp"

#include <algorithm>

#include "nextmin/error.hpp"

namespace nextmin::service {

std::string_view to_string(SessionMode m) noexcept {
  return m == SessionMode::replay ? "replay" : "live";
}

Json frame_to_json(const PredictionFrame& f) {
  Json j = {{"session_id", f.session_id},
            {"minute", f.minute},
            {"probabilities", f.probabilities},
            {"thresholds", f.thresholds},
            {"predicted", f.predicted}};
  if (f.truth) j["truth"] = *f.truth;
  if (f.outcomes) {
    Json cells = Json::array();
    for (auto o : *f.outcomes) cells.push_back(to_string(o));
    j["outcomes"] = std::move(cells);
  }
  return j;
}

namespace {

std::string_view kind_name(Override::Kind k) {
  switch (k) {
    case Override::Kind::vitals: return "vitals";
    case Override::Kind::static_context: return "static";
    case Override::Kind::inject_event: return "inject_event";
    case Override::Kind::suppress_event: return "suppress_event";
  }
  return "";
}

[[noreturn]] void bad_override(const std::string& what) {
  throw Error(ErrorCode::invalid_argument, "override: " + what);
}

template <class Fields>
bool is_field(const Fields& fields, std::string_view name) {
  return std::any_of(fields.begin(), fields.end(), [&](const auto& f) { return f.name == name; });
}

}  // namespace

Json override_to_json(const Override& o, const ActivityCatalog& catalog) {
  Json j = {{"override_id", o.id}, {"kind", kind_name(o.kind)}};
  switch (o.kind) {
    case Override::Kind::vitals:
      j["effective_minute"] = o.effective_minute;
      [[fallthrough]];
    case Override::Kind::static_context:
      j["fields"] = o.numeric;
      if (o.category) j["category"] = *o.category;
      break;
    case Override::Kind::inject_event:
      j["activity"] = catalog.name(o.event.label);
      j["start_s"] = o.event.start_s;
      j["end_s"] = o.event.end_s;
      break;
    case Override::Kind::suppress_event:
      j["event_index"] = o.event_index;
      break;
  }
  return j;
}

Override override_from_json(const Json& j, const DatasetManifest& manifest, std::int64_t current_minute) {
  if (!j.is_object()) bad_override("body must be an object");
  Override o;
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "vitals" || kind == "static") {
      const bool vitals = kind == "vitals";
      o.kind = vitals ? Override::Kind::vitals : Override::Kind::static_context;
      o.effective_minute = j.value("effective_minute", current_minute);
      if (o.effective_minute < 0) bad_override("effective_minute must be non-negative");
      const Json fields = j.value("fields", Json::object());
      for (const auto& [name, value] : fields.items()) {
        const bool known = vitals ? is_field(kDynamicNumericFields, name) : is_field(kStaticNumericFields, name);
        if (!known) bad_override("unknown field '" + name + "'");
        const double v = value.get<double>();
        if (!std::isfinite(v)) bad_override("field '" + name + "' is not finite");
        o.numeric[name] = v;
      }
      if (j.contains("category")) {
        o.category = j.at("category").get<std::string>();
        const auto& vocab = vitals ? manifest.fio2 : manifest.injury_type;
        if (!vocab.contains(*o.category)) bad_override("unknown category '" + *o.category + "'");
      }
      if (o.numeric.empty() && !o.category) bad_override("no fields to change");
    } else if (kind == "inject_event") {
      o.kind = Override::Kind::inject_event;
      const auto name = j.at("activity").get<std::string>();
      const auto label = manifest.catalog.index_of(name);
      if (!label) throw Error(ErrorCode::validation, "unknown activity '" + name + "'");
      o.event = {*label, j.at("start_s").get<std::int64_t>(), j.at("end_s").get<std::int64_t>()};
      if (o.event.start_s < 0 || o.event.end_s < o.event.start_s) bad_override("event interval is invalid");
    } else if (kind == "suppress_event") {
      o.kind = Override::Kind::suppress_event;
      o.event_index = j.at("event_index").get<std::size_t>();
    } else {
      bad_override("unknown kind '" + kind + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    bad_override(e.what());
  }
  return o;
}

std::optional<PredictionFrame> FrameSubscription::next(std::chrono::milliseconds timeout) {
  auto& s = *session_;
  std::unique_lock lock(s.mutex_);
  s.frame_added_.wait_for(lock, timeout, [&] { return cursor_ < s.frames_.size() || s.closed_; });
  if (cursor_ < s.frames_.size()) return s.frames_[cursor_++];
  return std::nullopt;
}

bool FrameSubscription::closed() const {
  std::lock_guard lock(session_->mutex_);
  return session_->closed_ && cursor_ >= session_->frames_.size();
}

Session::Session(std::string id, std::shared_ptr<const LoadedModel> model, SessionMode mode,
                 std::optional<CaseLog> source, StaticContext live_static)
    : id_(std::move(id)),
      model_(std::move(model)),
      mode_(mode),
      source_(std::move(source)),
      live_static_(std::move(live_static)) {
  if (mode_ == SessionMode::replay && !source_) {
    throw Error(ErrorCode::invalid_argument, "replay session needs a source case");
  }
}

std::int64_t Session::minute() const {
  std::lock_guard lock(mutex_);
  return minute_;
}

void Session::check_open() const {
  if (closed_) throw Error(ErrorCode::state, "session " + id_ + " is closed");
}

StaticContext Session::effective_static() const {
  StaticContext s = source_ ? source_->static_context : live_static_;
  for (const auto& o : overrides_) {
    if (o.kind != Override::Kind::static_context) continue;
    for (const auto& f : kStaticNumericFields) {
      if (auto it = o.numeric.find(std::string(f.name)); it != o.numeric.end()) s.*f.member = it->second;
    }
    if (o.category) s.injury_type = o.category;
  }
  return s;
}

std::vector<DynamicContextRecord> Session::effective_vitals() const {
  std::vector<DynamicContextRecord> v = source_ ? source_->vitals : live_vitals_;
  std::vector<const Override*> edits;
  for (const auto& o : overrides_) {
    if (o.kind == Override::Kind::vitals) edits.push_back(&o);
  }
  if (edits.empty()) return v;
  std::stable_sort(edits.begin(), edits.end(),
                   [](const Override* a, const Override* b) { return a->effective_minute < b->effective_minute; });
  auto patch = [](DynamicContextRecord& r, const Override& o) {
    for (const auto& f : kDynamicNumericFields) {
      if (auto it = o.numeric.find(std::string(f.name)); it != o.numeric.end()) r.*f.member = it->second;
    }
    if (o.category) r.fio2 = o.category;
  };
  for (const Override* o : edits) {
    const std::int64_t t = 60 * o->effective_minute;
    const auto* prior = carry_forward_vitals(v, t);
    DynamicContextRecord inserted = prior ? *prior : DynamicContextRecord{};
    inserted.t_s = t;
    const auto at = std::upper_bound(v.begin(), v.end(), t,
                                     [](std::int64_t x, const DynamicContextRecord& r) { return x < r.t_s; });
    v.insert(at, inserted);
    for (auto& r : v) {
      if (r.t_s >= t) patch(r, *o);
    }
  }
  return v;
}

std::vector<ActivityEvent> Session::effective_events() const {
  const auto& base = source_ ? source_->events : live_events_;
  std::vector<bool> hidden(base.size(), false);
  for (const auto& o : overrides_) {
    if (o.kind == Override::Kind::suppress_event) hidden[o.event_index] = true;
  }
  std::vector<ActivityEvent> out;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (!hidden[i]) out.push_back(base[i]);
  }
  for (const auto& o : overrides_) {
    if (o.kind == Override::Kind::inject_event) out.push_back(o.event);
  }
  return out;
}

PredictionFrame Session::tick() {
  std::unique_lock lock(mutex_);
  check_open();
  if (mode_ == SessionMode::replay && minute_ >= source_->minutes()) {
    throw Error(ErrorCode::end_of_case, "replay of " + source_->case_id + " has ended after minute " +
                                            std::to_string(source_->minutes() - 1));
  }
  const auto& m = *model_;
  const auto statics = effective_static();
  const auto vitals = effective_vitals();
  const auto events = effective_events();
  const std::string_view case_id = source_ ? std::string_view(source_->case_id) : std::string_view(id_);
  const Sample sample = m.encoder.encode_minute(case_id, statics, vitals, events, minute_);

  PredictionFrame f;
  f.session_id = id_;
  f.minute = minute_;
  f.features = assemble_features(sample, m.bundle.mask);
  const Batch batch = make_batch(std::span(&f.features, 1), m.encoder.layout(m.bundle.mask));
  const Matrix probs = m.bundle.model.predict(batch);
  const auto& thresholds = *m.bundle.thresholds;
  f.probabilities.assign(probs.row(0).begin(), probs.row(0).end());
  f.thresholds = thresholds.thresholds;
  const LabelMatrix decided = decide(probs, thresholds);
  const auto bits = decided.row(0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) f.predicted.push_back(i);
  }
  if (source_) {
    const auto truth = label_minute(source_->events, minute_, m.encoder.n_labels());
    std::vector<std::size_t> t;
    std::vector<Outcome> cells;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i]) t.push_back(i);
      cells.push_back(bits[i] ? (truth[i] ? Outcome::tp : Outcome::fp) : (truth[i] ? Outcome::fn : Outcome::tn));
    }
    f.truth = std::move(t);
    f.outcomes = std::move(cells);
  }
  ++minute_;
  frames_.push_back(f);
  lock.unlock();
  frame_added_.notify_all();
  return f;
}

Override Session::apply_override(Override o) {
  std::lock_guard lock(mutex_);
  check_open();
  if (o.kind == Override::Kind::suppress_event) {
    const auto& base = source_ ? source_->events : live_events_;
    if (o.event_index >= base.size()) {
      throw Error(ErrorCode::invalid_argument, "override: event_index " + std::to_string(o.event_index) +
                                                   " out of range (" + std::to_string(base.size()) + " events)");
    }
  }
  o.id = next_override_++;
  overrides_.push_back(o);
  return o;
}

void Session::remove_override(std::uint64_t override_id) {
  std::lock_guard lock(mutex_);
  check_open();
  const auto it = std::find_if(overrides_.begin(), overrides_.end(),
                               [&](const Override& o) { return o.id == override_id; });
  if (it == overrides_.end()) {
    throw Error(ErrorCode::not_found, "override " + std::to_string(override_id) + " not found");
  }
  overrides_.erase(it);
}

std::vector<Override> Session::overrides() const {
  std::lock_guard lock(mutex_);
  return overrides_;
}

void Session::record_event(std::string_view activity, std::int64_t start_s, std::int64_t end_s) {
  std::lock_guard lock(mutex_);
  check_open();
  if (mode_ != SessionMode::live) {
    throw Error(ErrorCode::state, "replay sessions take events as overrides; use inject_event");
  }
  const auto label = model_->encoder.manifest().catalog.index_of(activity);
  if (!label) throw Error(ErrorCode::validation, "unknown activity '" + std::string(activity) + "'");
  if (start_s < 0 || end_s < start_s) throw Error(ErrorCode::validation, "event interval inverted");
  live_events_.push_back({*label, start_s, end_s});
}

void Session::record_vitals(DynamicContextRecord record) {
  std::lock_guard lock(mutex_);
  check_open();
  if (mode_ != SessionMode::live) {
    throw Error(ErrorCode::state, "replay sessions take vitals as overrides");
  }
  if (record.t_s < 0) throw Error(ErrorCode::validation, "vitals time must be non-negative");
  if (record.fio2 && !model_->encoder.manifest().fio2.contains(*record.fio2)) {
    throw Error(ErrorCode::validation, "unknown fio2 value '" + *record.fio2 + "'");
  }
  const auto at = std::upper_bound(live_vitals_.begin(), live_vitals_.end(), record.t_s,
                                   [](std::int64_t t, const DynamicContextRecord& r) { return t < r.t_s; });
  live_vitals_.insert(at, std::move(record));
}

std::vector<PredictionFrame> Session::frames(std::size_t since) const {
  std::lock_guard lock(mutex_);
  if (since >= frames_.size()) return {};
  return {frames_.begin() + static_cast<std::ptrdiff_t>(since), frames_.end()};
}

FrameSubscription Session::subscribe() { return FrameSubscription(shared_from_this()); }

void Session::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  frame_added_.notify_all();
}

bool Session::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

Json Session::describe() const {
  std::lock_guard lock(mutex_);
  const auto& catalog = model_->encoder.manifest().catalog;
  Json overrides = Json::array();
  for (const auto& o : overrides_) overrides.push_back(override_to_json(o, catalog));
  Json j = {{"session_id", id_},
            {"mode", to_string(mode_)},
            {"model_id", model_->id},
            {"minute", minute_},
            {"frames", frames_.size()},
            {"closed", closed_},
            {"overrides", std::move(overrides)}};
  if (source_) {
    j["case_id"] = source_->case_id;
    j["minutes"] = source_->minutes();
  }
  return j;
}

SessionManager::SessionManager(std::optional<Corpus> corpus) : corpus_(std::move(corpus)) {}

const DatasetManifest* SessionManager::manifest() const noexcept {
  return corpus_ ? &corpus_->manifest : nullptr;
}

std::string SessionManager::load_model(const std::filesystem::path& checkpoint,
                                       const std::optional<std::filesystem::path>& report) {
  const DatasetManifest* m = manifest();
  if (!m) throw Error(ErrorCode::state, "no corpus loaded; the manifest defines the catalog");
  auto bundle = load_checkpoint(checkpoint, m->catalog.hash());
  std::optional<EvalReport> r;
  if (report) r = eval_report_from_json(read_json_file(*report));
  return add_model(std::move(bundle), *m, std::move(r), checkpoint);
}

std::string SessionManager::add_model(ModelBundle bundle, DatasetManifest manifest, std::optional<EvalReport> report,
                                      std::filesystem::path source) {
  if (!bundle.thresholds) throw Error(ErrorCode::state, "model is not calibrated (no thresholds)");
  if (bundle.catalog_hash != manifest.catalog.hash()) {
    throw Error(ErrorCode::catalog_mismatch, "model was trained against a different activity catalog");
  }
  if (bundle.thresholds->size() != manifest.catalog.size()) {
    throw Error(ErrorCode::invalid_argument, "threshold count does not match the catalog");
  }
  if (report && report->per_label.size() != manifest.catalog.size()) {
    throw Error(ErrorCode::invalid_argument, "report does not match the catalog");
  }
  FeatureEncoder encoder(std::move(manifest), bundle.stats, bundle.k, bundle.sample_seed);
  if (!(encoder.layout(bundle.mask) == bundle.model.shape().input)) {
    throw Error(ErrorCode::invalid_argument, "model input layout does not match the manifest");
  }
  bundle.model.set_mode(Mode::eval);
  std::lock_guard lock(mutex_);
  std::string id = "m" + std::to_string(next_model_++);
  models_[id] = std::make_shared<const LoadedModel>(
      LoadedModel{id, std::move(source), std::move(bundle), std::move(encoder), std::move(report)});
  return id;
}

std::shared_ptr<const LoadedModel> SessionManager::model(std::string_view id) const {
  std::lock_guard lock(mutex_);
  const auto it = models_.find(id);
  if (it == models_.end()) throw Error(ErrorCode::not_found, "unknown model '" + std::string(id) + "'");
  return it->second;
}

std::vector<std::shared_ptr<const LoadedModel>> SessionManager::models() const {
  std::lock_guard lock(mutex_);
  std::vector<std::shared_ptr<const LoadedModel>> out;
  for (const auto& [id, m] : models_) out.push_back(m);
  return out;
}

std::shared_ptr<Session> SessionManager::create_session(const SessionRequest& request) {
  auto m = model(request.model_id);
  std::optional<CaseLog> source;
  if (request.mode == SessionMode::replay) {
    const CaseLog* c = corpus_ ? corpus_->find(request.case_id) : nullptr;
    if (!c) throw Error(ErrorCode::not_found, "unknown case '" + request.case_id + "'");
    source = *c;
  } else if (request.static_context.injury_type &&
             !m->encoder.manifest().injury_type.contains(*request.static_context.injury_type)) {
    throw Error(ErrorCode::validation, "unknown injury_type '" + *request.static_context.injury_type + "'");
  }
  std::lock_guard lock(mutex_);
  std::string id = "s" + std::to_string(next_session_++);
  auto s = std::make_shared<Session>(id, std::move(m), request.mode, std::move(source), request.static_context);
  sessions_[id] = s;
  return s;
}

std::shared_ptr<Session> SessionManager::session(std::string_view id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::not_found, "unknown session '" + std::string(id) + "'");
  return it->second;
}

std::vector<std::shared_ptr<Session>> SessionManager::sessions() const {
  std::lock_guard lock(mutex_);
  std::vector<std::shared_ptr<Session>> out;
  for (const auto& [id, s] : sessions_) out.push_back(s);
  return out;
}

void SessionManager::close_session(std::string_view id) {
  std::shared_ptr<Session> s;
  {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::not_found, "unknown session '" + std::string(id) + "'");
    s = it->second;
    sessions_.erase(it);
  }
  s->close();
}

TimelineExport SessionManager::timeline(std::string_view case_id, std::string_view model_id, double cutoff) const {
  if (!corpus_) throw Error(ErrorCode::state, "no corpus loaded");
  const auto m = model(model_id);
  if (m->report) return export_timeline(*corpus_, case_id, m->bundle, *m->report, cutoff);

  EvalReport report;
  {
    std::lock_guard lock(mutex_);
    if (auto it = corpus_reports_.find(model_id); it != corpus_reports_.end()) report = it->second;
  }
  if (report.per_label.empty()) {
    std::vector<Sample> samples;
    for (const auto& c : corpus_->cases) {
      auto s = m->encoder.sample_case(c);
      samples.insert(samples.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
    }
    const auto data = build_dataset(samples, m->bundle.mask, m->encoder.layout(m->bundle.mask));
    const auto preds = decide(m->bundle.model.predict(data.all()), *m->bundle.thresholds);
    report = evaluate_predictions(preds, data.labels, corpus_->manifest.catalog);
    std::lock_guard lock(mutex_);
    corpus_reports_.emplace(std::string(model_id), report);
  }
  return export_timeline(*corpus_, case_id, m->bundle, report, cutoff);
}

}  // namespace nextmin::service
