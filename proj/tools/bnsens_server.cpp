// bnsens-server: HTTP service for interactive elicitation sessions.
//
// Config file (JSON): {"host": "127.0.0.1", "port": 8080, "history_cap": 64}.
// Flags override the file.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "bnsens/service.hpp"
#include "httplib.h"
#include "json.hpp"

int main(int argc, char** argv) {
  CLI::App app{"bnsens HTTP service"};
  std::string config, host;
  int port = -1;
  app.add_option("--config,-c", config, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--host", host, "listen address");
  app.add_option("--port,-p", port, "listen port (0 picks a free one)")->check(CLI::Range(0, 65535));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  bnsens::Service::Options opts;
  std::string bind = "127.0.0.1";
  int listen = 8080;
  if (!config.empty()) {
    try {
      std::ifstream in(config);
      const auto j = nlohmann::json::parse(in);
      bind = j.value("host", bind);
      listen = j.value("port", listen);
      opts.history_cap = j.value("history_cap", opts.history_cap);
    } catch (const std::exception& e) {
      std::cerr << "error: bad config '" << config << "': " << e.what() << "\n";
      return 2;
    }
  }
  if (!host.empty()) bind = host;
  if (port >= 0) listen = port;

  bnsens::Service service(opts);
  httplib::Server server;
  bnsens::mount(server, service);
  if (listen == 0) listen = server.bind_to_any_port(bind);
  else if (!server.bind_to_port(bind, listen)) listen = -1;
  if (listen < 0) {
    std::cerr << "error: cannot listen on " << bind << "\n";
    return 1;
  }
  std::cout << "listening on http://" << bind << ":" << listen << std::endl;
  server.listen_after_bind();
  return 0;
}
