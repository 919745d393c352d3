#pragma once

// Human-driven enhancement sessions: microtask bundling, check-slot
// validation, median aggregation and on-disk persistence. The HTTP layer in
// http_server.hpp is a thin translation of these calls.

#include "crowdlocal/image.hpp"
#include "crowdlocal/orchestrator.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace crowdlocal {

struct ServiceConfig {
  std::filesystem::path data_dir = "data";
  double check_lower = 0.25;
  double check_upper = 0.75;
  int bundle_size = 5;
  std::uint64_t seed = 0;
  /// Preview edge used when a request does not name one.
  int preview_max_edge = 512;
};

/// Maps onto HTTP status codes in the server.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

enum class SessionStatus { collecting, advancing, done, aborted };
std::string to_string(SessionStatus s);

struct CollectedResponse {
  std::string worker_id;
  std::string microtask_id;
  double alpha = 0;        // effective (un-reversed)
  double alpha_check = 0;  // effective check value of the same submission
  bool reversed = false;
};

struct Slot {
  bool check = false;
  std::string session_id;  // empty for the check slot
  int step = 0;            // 0-based step index of the target session
};

struct Assignment {
  enum class State { pending, accepted, rejected };
  std::string worker_id;
  std::vector<Slot> slots;  // presentation order, check slot included
  std::vector<bool> reversed;
  State state = State::pending;
  std::vector<double> submitted;  // raw slider positions
};

struct Microtask {
  std::string id;
  std::vector<Slot> targets;  // target slots only, bundle order
  int required = 7;
  int accepted = 0;
  bool open = true;
  std::map<std::string, Assignment> assignments;  // by worker id

  int pending() const;
  int capacity() const { return required - accepted - pending(); }
};

/// Read-only view of a session for rendering outside the service lock.
struct PreviewSnapshot {
  SliderTask task;
  int max_edge = 0;
};

class SessionService {
 public:
  /// Loads any sessions already persisted under cfg.data_dir.
  explicit SessionService(ServiceConfig cfg);

  const ServiceConfig& config() const { return cfg_; }

  /// Returns the new session id. Throws ServiceError(400) on bad image or config.
  std::string create_session(std::span<const unsigned char> image_bytes, const nlohmann::json& config);
  nlohmann::json list_sessions() const;
  nlohmann::json session_state(const std::string& id) const;

  /// std::nullopt when no work is available.
  std::optional<nlohmann::json> get_microtask(const std::string& worker_id);

  /// Returns {"status": "accepted"|"rejected", ...}.
  nlohmann::json submit_response(const std::string& worker_id, const std::string& microtask_id,
                                 const std::vector<double>& raw_alphas);

  /// PNG bytes of the current step's slider at raw position u.
  std::vector<unsigned char> render_preview(const std::string& id, double u, bool reversed,
                                            std::optional<int> max_edge) const;
  /// PNG bytes of the check slider at raw position u.
  std::vector<unsigned char> render_check(double u, bool reversed, std::optional<int> max_edge) const;

  nlohmann::json result(const std::string& id) const;
  /// Path of a finished artifact (result.png, trace.csv, params.csv); 404 otherwise.
  std::filesystem::path artifact(const std::string& id, const std::string& name) const;

  /// The fixed check image and its parameters at effective alpha.
  static const Image& check_image();
  static ParamVector check_params(double alpha);

 private:
  struct Session {
    std::string id;
    std::unique_ptr<EnhancementRun> run;
    SessionStatus status = SessionStatus::collecting;
    std::vector<CollectedResponse> responses;  // accepted, current step
    std::string microtask_id;                  // open microtask holding this session, if any
  };

  Session& find(const std::string& id);
  const Session& find(const std::string& id) const;
  std::filesystem::path session_dir(const std::string& id) const;
  std::string next_id(const char* prefix, std::uint64_t& counter);
  Assignment make_assignment(const Microtask& mt, const std::string& worker_id) const;
  nlohmann::json assignment_json(const Microtask& mt, const Assignment& a) const;
  void advance(Microtask& mt);
  void finalize(Session& s);
  void persist_session(const Session& s) const;
  void persist_service() const;
  void load();

  ServiceConfig cfg_;
  mutable std::mutex mutex_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  std::vector<std::string> order_;
  std::map<std::string, Microtask> microtasks_;
  std::uint64_t session_counter_ = 0;
  std::uint64_t microtask_counter_ = 0;
};

/// Writes `bytes` to `path` via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// pixel,row,col,brightness,saturation,contrast
std::string params_csv(const ParamMap& params, int width);

}  // namespace crowdlocal
