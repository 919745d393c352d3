#pragma once

#include "crowdlocal/session_service.hpp"

#include <filesystem>
#include <optional>

namespace httplib {
class Server;
}

namespace crowdlocal {

/// Installs the JSON/PNG endpoints for `service` on `server`; serves
/// `static_dir` at / when given.
void register_routes(httplib::Server& server, SessionService& service,
                     const std::optional<std::filesystem::path>& static_dir = std::nullopt);

}  // namespace crowdlocal
