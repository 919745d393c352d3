#include "crowdlocal/session_service.hpp"

#include "crowdlocal/csv.hpp"
#include "crowdlocal/edit.hpp"
#include "crowdlocal/errors.hpp"
#include "crowdlocal/seeding.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace crowdlocal {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* state_name(Assignment::State s) {
  switch (s) {
    case Assignment::State::pending: return "pending";
    case Assignment::State::accepted: return "accepted";
    case Assignment::State::rejected: return "rejected";
  }
  return "pending";
}

Assignment::State parse_state(const std::string& s) {
  if (s == "accepted") return Assignment::State::accepted;
  if (s == "rejected") return Assignment::State::rejected;
  return Assignment::State::pending;
}

SessionStatus parse_status(const std::string& s) {
  if (s == "done") return SessionStatus::done;
  if (s == "aborted") return SessionStatus::aborted;
  if (s == "advancing") return SessionStatus::advancing;
  return SessionStatus::collecting;
}

json slot_json(const Slot& s) {
  return s.check ? json{{"check", true}} : json{{"check", false}, {"session_id", s.session_id}, {"step", s.step}};
}

Slot slot_from_json(const json& j) {
  Slot s;
  s.check = j.at("check").get<bool>();
  if (!s.check) {
    s.session_id = j.at("session_id").get<std::string>();
    s.step = j.at("step").get<int>();
  }
  return s;
}

bool same_target(const Slot& a, const Slot& b) { return !a.check && !b.check && a.session_id == b.session_id; }

std::vector<unsigned char> png_at_edge(const Image& image, std::optional<int> max_edge) {
  if (max_edge && *max_edge < std::max(image.width, image.height)) return encode_png(resize_for_preview(image, *max_edge));
  return encode_png(image);
}

void check_alpha(double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw ServiceError(400, "alpha must be in [0,1]");
}

}  // namespace

std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::collecting: return "collecting";
    case SessionStatus::advancing: return "advancing";
    case SessionStatus::done: return "done";
    case SessionStatus::aborted: return "aborted";
  }
  return "collecting";
}

int Microtask::pending() const {
  return int(std::count_if(assignments.begin(), assignments.end(),
                           [](const auto& kv) { return kv.second.state == Assignment::State::pending; }));
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    out.flush();
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string params_csv(const ParamMap& params, int width) {
  std::string out = "pixel,row,col,brightness,saturation,contrast\n";
  for (Eigen::Index n = 0; n < params.rows(); ++n) {
    out += std::to_string(n) + ',' + std::to_string(n / width) + ',' + std::to_string(n % width);
    for (int c = 0; c < 3; ++c) out += ',' + format_double(params(n, c));
    out += '\n';
  }
  return out;
}

const Image& SessionService::check_image() {
  static const Image image = [] {
    Image img(96, 64);
    for (int r = 0; r < img.height; ++r) {
      for (int c = 0; c < img.width; ++c) {
        const double x = c / 95.0, y = r / 63.0;
        Rgb col(0.3 + 0.4 * x, 0.45 + 0.2 * (1 - y), 0.5 - 0.2 * x);
        const double dx = x - 0.65, dy = y - 0.55;
        if (dx * dx + dy * dy < 0.04) col = Rgb(0.75, 0.35, 0.3);
        if (x < 0.3 && y > 0.6) col = Rgb(0.25, 0.5, 0.3);
        img.pixel(img.index(r, c)) = col.transpose();
      }
    }
    return img;
  }();
  return image;
}

ParamVector SessionService::check_params(double alpha) {
  return blend(ParamVector(-1.0, 0.0, 0.0), ParamVector(1.0, 0.0, 0.0), alpha);
}

SessionService::SessionService(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.bundle_size < 1) throw ConfigError("bundle size must be at least 1");
  if (!(cfg_.check_lower >= 0.0 && cfg_.check_upper <= 1.0 && cfg_.check_lower < cfg_.check_upper)) {
    throw ConfigError("check range must satisfy 0 <= lower < upper <= 1");
  }
  if (cfg_.preview_max_edge < 1) throw ConfigError("preview edge must be positive");
  fs::create_directories(cfg_.data_dir / "sessions");
  load();
}

fs::path SessionService::session_dir(const std::string& id) const { return cfg_.data_dir / "sessions" / id; }

std::string SessionService::next_id(const char* prefix, std::uint64_t& counter) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s-%06llu", prefix, static_cast<unsigned long long>(++counter));
  return buf;
}

SessionService::Session& SessionService::find(const std::string& id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "unknown session " + id);
  return *it->second;
}

const SessionService::Session& SessionService::find(const std::string& id) const {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "unknown session " + id);
  return *it->second;
}

std::string SessionService::create_session(std::span<const unsigned char> image_bytes, const json& config) {
  Image image;
  try {
    image = decode_image(image_bytes);
  } catch (const ImageIoError& e) {
    throw ServiceError(400, std::string("bad image: ") + e.what());
  }
  EnhanceConfig cfg = EnhanceConfig::human_defaults();
  std::unique_ptr<EnhancementRun> run;
  try {
    if (!config.is_null()) from_json(config, cfg);
    run = std::make_unique<EnhancementRun>(image, cfg);
  } catch (const std::invalid_argument& e) {
    throw ServiceError(400, std::string("bad config: ") + e.what());
  }

  std::lock_guard lock(mutex_);
  auto session = std::make_unique<Session>();
  session->id = next_id("session", session_counter_);
  session->run = std::move(run);
  const fs::path dir = session_dir(session->id);
  fs::create_directories(dir);
  const auto png = encode_png(image);
  write_file_atomic(dir / "input.png", std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
  persist_session(*session);
  const std::string id = session->id;
  order_.push_back(id);
  sessions_.emplace(id, std::move(session));
  persist_service();
  return id;
}

json SessionService::list_sessions() const {
  json out = json::array();
  std::lock_guard lock(mutex_);
  for (const auto& id : order_) {
    const Session& s = *sessions_.at(id);
    out.push_back({{"id", id},
                   {"status", to_string(s.status)},
                   {"steps_done", s.run->steps_done()},
                   {"total_steps", s.run->total_steps()}});
  }
  return out;
}

json SessionService::session_state(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const Session& s = find(id);
  const auto& run = *s.run;
  json keys = json::array();
  for (auto k : run.prepared().keys.indices) keys.push_back(k);
  int accepted = 0;
  if (!s.microtask_id.empty()) accepted = microtasks_.at(s.microtask_id).accepted;
  json trace = json::array();
  for (const auto& r : run.trace()) trace.push_back({{"s", r.s}, {"l", r.l}, {"alpha", r.alpha}});
  json step = nullptr;
  if (!run.done()) {
    const auto [st, l] = run.current_step();
    step = {{"s", st}, {"l", l}};
  }
  return {{"id", id},
          {"status", to_string(s.status)},
          {"width", run.input().width},
          {"height", run.input().height},
          {"L", run.config().L},
          {"S", run.config().S},
          {"step", step},
          {"steps_done", run.steps_done()},
          {"total_steps", run.total_steps()},
          {"accepted_responses", accepted},
          {"responses_required", run.config().responses_per_slider},
          {"microtask_id", s.microtask_id.empty() ? json(nullptr) : json(s.microtask_id)},
          {"key_pixels", keys},
          {"trace", trace},
          {"config", run.config()}};
}

Assignment SessionService::make_assignment(const Microtask& mt, const std::string& worker_id) const {
  std::mt19937_64 rng(derive_seed(cfg_.seed ^ fnv1a(mt.id), fnv1a(worker_id)));
  Assignment a;
  a.worker_id = worker_id;
  a.slots = mt.targets;
  const auto check_pos = std::uniform_int_distribution<std::size_t>(0, a.slots.size())(rng);
  a.slots.insert(a.slots.begin() + std::ptrdiff_t(check_pos), Slot{true, "", 0});
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < a.slots.size(); ++i) a.reversed.push_back(coin(rng));
  return a;
}

json SessionService::assignment_json(const Microtask& mt, const Assignment& a) const {
  json slots = json::array();
  for (std::size_t i = 0; i < a.slots.size(); ++i) {
    const Slot& slot = a.slots[i];
    json j{{"kind", slot.check ? "check" : "target"}, {"reversed", bool(a.reversed[i])}};
    if (slot.check) {
      j["preview_url"] = "/check/preview";
    } else {
      const auto& run = *sessions_.at(slot.session_id)->run;
      const auto [s, l] = run.current_step();
      j["session_id"] = slot.session_id;
      j["s"] = s;
      j["l"] = l;
      j["preview_url"] = "/sessions/" + slot.session_id + "/preview";
    }
    slots.push_back(std::move(j));
  }
  return {{"microtask_id", mt.id}, {"worker_id", a.worker_id}, {"slots", slots}};
}

std::optional<json> SessionService::get_microtask(const std::string& worker_id) {
  if (worker_id.empty()) throw ServiceError(400, "worker id required");
  std::lock_guard lock(mutex_);
  for (auto& [id, mt] : microtasks_) {
    if (!mt.open) continue;
    auto it = mt.assignments.find(worker_id);
    if (it != mt.assignments.end() && it->second.state == Assignment::State::pending) {
      return assignment_json(mt, it->second);
    }
  }
  for (auto& [id, mt] : microtasks_) {
    if (!mt.open || mt.capacity() <= 0 || mt.assignments.contains(worker_id)) continue;
    const auto& a = mt.assignments.emplace(worker_id, make_assignment(mt, worker_id)).first->second;
    persist_service();
    return assignment_json(mt, a);
  }

  Microtask mt;
  for (const auto& sid : order_) {
    Session& s = *sessions_.at(sid);
    if (s.status != SessionStatus::collecting || !s.microtask_id.empty()) continue;
    const int required = s.run->config().responses_per_slider;
    if (mt.targets.empty()) mt.required = required;
    if (required != mt.required) continue;
    mt.targets.push_back(Slot{false, sid, s.run->steps_done()});
    if (int(mt.targets.size()) == cfg_.bundle_size) break;
  }
  if (mt.targets.empty()) return std::nullopt;
  mt.id = next_id("mt", microtask_counter_);
  for (const auto& slot : mt.targets) sessions_.at(slot.session_id)->microtask_id = mt.id;
  mt.assignments.emplace(worker_id, make_assignment(mt, worker_id));
  auto& stored = microtasks_.emplace(mt.id, std::move(mt)).first->second;
  persist_service();
  return assignment_json(stored, stored.assignments.at(worker_id));
}

json SessionService::submit_response(const std::string& worker_id, const std::string& microtask_id,
                                     const std::vector<double>& raw_alphas) {
  std::lock_guard lock(mutex_);
  auto mt_it = microtasks_.find(microtask_id);
  if (mt_it == microtasks_.end()) throw ServiceError(404, "unknown microtask " + microtask_id);
  Microtask& mt = mt_it->second;
  auto a_it = mt.assignments.find(worker_id);
  if (a_it == mt.assignments.end()) throw ServiceError(404, "no assignment for worker " + worker_id);
  Assignment& a = a_it->second;

  if (a.state != Assignment::State::pending) {
    if (a.submitted == raw_alphas) return {{"status", state_name(a.state)}, {"duplicate", true}};
    throw ServiceError(409, "worker already responded to this microtask");
  }
  if (raw_alphas.size() != a.slots.size()) {
    throw ServiceError(400, "expected " + std::to_string(a.slots.size()) + " alphas");
  }
  for (double u : raw_alphas) check_alpha(u);

  double check_effective = 0.0;
  for (std::size_t i = 0; i < a.slots.size(); ++i) {
    if (a.slots[i].check) check_effective = a.reversed[i] ? 1.0 - raw_alphas[i] : raw_alphas[i];
  }
  const bool ok = validate_check(check_effective, cfg_.check_lower, cfg_.check_upper);
  a.submitted = raw_alphas;
  a.state = ok ? Assignment::State::accepted : Assignment::State::rejected;
  if (ok) ++mt.accepted;
  persist_service();
  if (ok && mt.accepted == mt.required) advance(mt);
  return {{"status", state_name(a.state)}, {"duplicate", false}, {"check_alpha", check_effective}};
}

void SessionService::advance(Microtask& mt) {
  for (const auto& target : mt.targets) {
    Session& s = *sessions_.at(target.session_id);
    // Idempotent: a restart may find some targets already advanced.
    if (s.run->steps_done() == target.step && s.status == SessionStatus::collecting) {
      std::vector<double> alphas;
      for (const auto& [worker, a] : mt.assignments) {
        if (a.state != Assignment::State::accepted) continue;
        for (std::size_t i = 0; i < a.slots.size(); ++i) {
          if (same_target(a.slots[i], target)) alphas.push_back(a.reversed[i] ? 1.0 - a.submitted[i] : a.submitted[i]);
        }
      }
      s.status = SessionStatus::advancing;
      try {
        s.run->submit(aggregate_responses(alphas));
        if (s.run->done()) {
          finalize(s);
        } else {
          s.status = SessionStatus::collecting;
        }
      } catch (const std::exception&) {
        s.status = SessionStatus::aborted;
      }
    }
    s.microtask_id.clear();
    persist_session(s);
  }
  mt.open = false;
  persist_service();
}

void SessionService::finalize(Session& s) {
  const fs::path dir = session_dir(s.id);
  const ParamMap params = s.run->final_param_map(false);
  const Image image = apply_param_map(s.run->prepared().working, params);
  const auto png = encode_png(image);
  write_file_atomic(dir / "result.png", std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
  write_file_atomic(dir / "trace.csv", trace_csv(s.run->trace()));
  write_file_atomic(dir / "params.csv", params_csv(params, image.width));
  s.status = SessionStatus::done;
}

std::vector<unsigned char> SessionService::render_preview(const std::string& id, double u, bool reversed,
                                                          std::optional<int> max_edge) const {
  check_alpha(u);
  if (max_edge && *max_edge < 1) throw ServiceError(400, "max_edge must be positive");
  SliderTask task;
  {
    std::lock_guard lock(mutex_);
    const Session& s = find(id);
    if (s.status != SessionStatus::collecting) throw ServiceError(409, "session is not collecting");
    task = s.run->current_task();
  }
  // The task points at immutable preparation data; render without the lock.
  return png_at_edge(task.render(reversed ? 1.0 - u : u, true), max_edge.value_or(cfg_.preview_max_edge));
}

std::vector<unsigned char> SessionService::render_check(double u, bool reversed, std::optional<int> max_edge) const {
  check_alpha(u);
  if (max_edge && *max_edge < 1) throw ServiceError(400, "max_edge must be positive");
  const Image& img = check_image();
  const Image out = apply_param_map(img, global_map(check_params(reversed ? 1.0 - u : u), img.pixel_count()));
  return png_at_edge(out, max_edge.value_or(cfg_.preview_max_edge));
}

json SessionService::result(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const Session& s = find(id);
  const auto& run = *s.run;
  json out{{"id", id}, {"status", to_string(s.status)}, {"steps_done", run.steps_done()},
           {"total_steps", run.total_steps()}};
  if (s.status == SessionStatus::done) {
    json trace = json::array();
    for (const auto& r : run.trace()) trace.push_back({{"s", r.s}, {"l", r.l}, {"alpha", r.alpha}});
    out["trace"] = trace;
    out["result_png"] = "/sessions/" + id + "/result.png";
    out["trace_csv"] = "/sessions/" + id + "/trace.csv";
    out["params_csv"] = "/sessions/" + id + "/params.csv";
  } else if (!run.done()) {
    const auto [st, l] = run.current_step();
    out["step"] = {{"s", st}, {"l", l}};
    out["responses_so_far"] = s.microtask_id.empty() ? 0 : microtasks_.at(s.microtask_id).accepted;
  }
  return out;
}

fs::path SessionService::artifact(const std::string& id, const std::string& name) const {
  std::lock_guard lock(mutex_);
  const Session& s = find(id);
  if (name != "result.png" && name != "trace.csv" && name != "params.csv") throw ServiceError(404, "unknown artifact");
  if (s.status != SessionStatus::done) throw ServiceError(404, "session not finished");
  return session_dir(id) / name;
}

void SessionService::persist_session(const Session& s) const {
  const json doc{{"id", s.id}, {"status", to_string(s.status)}, {"run", s.run->save()}};
  write_file_atomic(session_dir(s.id) / "session.json", doc.dump(1));
}

void SessionService::persist_service() const {
  json mts = json::array();
  for (const auto& [id, mt] : microtasks_) {
    json targets = json::array();
    for (const auto& t : mt.targets) targets.push_back(slot_json(t));
    json assignments = json::array();
    for (const auto& [worker, a] : mt.assignments) {
      json slots = json::array();
      for (const auto& s : a.slots) slots.push_back(slot_json(s));
      json reversed = json::array();
      for (bool r : a.reversed) reversed.push_back(r);
      assignments.push_back({{"worker_id", worker},
                             {"state", state_name(a.state)},
                             {"slots", slots},
                             {"reversed", reversed},
                             {"submitted", a.submitted}});
    }
    mts.push_back({{"id", id},
                   {"targets", targets},
                   {"required", mt.required},
                   {"accepted", mt.accepted},
                   {"open", mt.open},
                   {"assignments", assignments}});
  }
  const json doc{{"session_counter", session_counter_},
                 {"microtask_counter", microtask_counter_},
                 {"sessions", order_},
                 {"microtasks", mts}};
  write_file_atomic(cfg_.data_dir / "service.json", doc.dump(1));
}

void SessionService::load() {
  const fs::path index = cfg_.data_dir / "service.json";
  if (!fs::exists(index)) return;
  const json doc = json::parse(read_file(index));
  session_counter_ = doc.at("session_counter").get<std::uint64_t>();
  microtask_counter_ = doc.at("microtask_counter").get<std::uint64_t>();
  for (const auto& id_json : doc.at("sessions")) {
    const auto id = id_json.get<std::string>();
    const fs::path dir = session_dir(id);
    const json sdoc = json::parse(read_file(dir / "session.json"));
    auto s = std::make_unique<Session>();
    s->id = id;
    s->status = parse_status(sdoc.at("status").get<std::string>());
    s->run = std::make_unique<EnhancementRun>(EnhancementRun::restore(load_image(dir / "input.png"), sdoc.at("run")));
    if (s->status == SessionStatus::advancing) s->status = SessionStatus::collecting;
    order_.push_back(id);
    sessions_.emplace(id, std::move(s));
  }
  for (const auto& j : doc.at("microtasks")) {
    Microtask mt;
    mt.id = j.at("id").get<std::string>();
    for (const auto& t : j.at("targets")) mt.targets.push_back(slot_from_json(t));
    mt.required = j.at("required").get<int>();
    mt.accepted = j.at("accepted").get<int>();
    mt.open = j.at("open").get<bool>();
    for (const auto& aj : j.at("assignments")) {
      Assignment a;
      a.worker_id = aj.at("worker_id").get<std::string>();
      a.state = parse_state(aj.at("state").get<std::string>());
      for (const auto& s : aj.at("slots")) a.slots.push_back(slot_from_json(s));
      for (const auto& r : aj.at("reversed")) a.reversed.push_back(r.get<bool>());
      a.submitted = aj.at("submitted").get<std::vector<double>>();
      mt.assignments.emplace(a.worker_id, std::move(a));
    }
    if (mt.open) {
      for (const auto& t : mt.targets) sessions_.at(t.session_id)->microtask_id = mt.id;
    }
    microtasks_.emplace(mt.id, std::move(mt));
  }
  // Finish an aggregation that was interrupted between its writes.
  for (auto& [id, mt] : microtasks_) {
    if (mt.open && mt.accepted >= mt.required) advance(mt);
  }
}

}  // namespace crowdlocal
