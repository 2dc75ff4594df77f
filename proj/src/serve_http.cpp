// Eigen first: httplib pulls in resolv.h, whose _res macro breaks Eigen.
#include "volenc/service.hpp"

#include <httplib.h>

#include "volenc/error.hpp"

namespace volenc {

void bind_routes(httplib::Server& server, const Service& service) {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
        const auto out = service.handle(req.method, req.path, req.body);
        res.status = out.status;
        res.set_content(out.body, "application/json");
    };
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });
    server.Get(".*", forward);
    server.Post(".*", forward);
}

void serve_http(const Service& service, const std::string& host, int port) {
    httplib::Server server;
    // httplib's default SO_REUSEPORT would let a second server share the port.
    server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    bind_routes(server, service);
    if (!server.listen(host, port)) {
        throw Error("cannot listen on " + host + ":" + std::to_string(port));
    }
}

}  // namespace volenc
