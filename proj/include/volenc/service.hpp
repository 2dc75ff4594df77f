#pragma once

#include <optional>
#include <string>

#include "volenc/evaluation.hpp"
#include "volenc/extrapolation.hpp"
#include "volenc/latent_tools.hpp"
#include "volenc/vae.hpp"

namespace httplib {
class Server;
}

namespace volenc {

struct HttpResponse {
    int status = 200;
    std::string body;  // JSON
};

/// Read-only JSON API over one loaded model. Handlers never mutate the
/// model, so one instance may serve concurrent requests.
///
///   GET  /model/meta    D, grid, loss weights, checkpoint version
///   GET  /diagnostics   factor roles per latent (or the matching error)
///   GET  /thresholds    satisfaction thresholds by bucket
///   POST /decode        {"z": [...]}                 -> {"grid", "vols"}
///   POST /encode        {"vols": [[...] x terms]}    -> {"mu", "log_sigma"}
///   POST /extrapolate   {"mask": [[bool]], "values": [[num|null]] or [known...]}
class Service {
public:
    explicit Service(VaeModel model, ThresholdTable thresholds = ThresholdTable::canonical());

    HttpResponse handle(const std::string& method, const std::string& path, const std::string& body) const;

    const VaeModel& model() const { return model_; }

private:
    HttpResponse meta() const;
    HttpResponse diagnostics() const;
    HttpResponse thresholds() const;
    HttpResponse decode_request(const std::string& body) const;
    HttpResponse encode_request(const std::string& body) const;
    HttpResponse extrapolate_request(const std::string& body) const;

    VaeModel model_;
    ThresholdTable thresholds_;
    std::string diagnostics_body_;  // computed once at startup
};

/// Routes every request on `server` to `service` and adds permissive CORS.
void bind_routes(httplib::Server& server, const Service& service);

/// Blocks serving `service` on host:port.
void serve_http(const Service& service, const std::string& host, int port);

}  // namespace volenc
