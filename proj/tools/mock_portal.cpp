// Static file server standing in for the open-data portal in local runs.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <httplib.h>

int main(int argc, char** argv) {
  std::string root;
  std::string host = "127.0.0.1";
  int port = 0;
  CLI::App app{"Serve a directory over HTTP as a stand-in data portal", "spainmob-mock-portal"};
  app.add_option("--root", root, "Directory to serve")->required()->check(CLI::ExistingDirectory);
  app.add_option("--host", host, "Bind address")->capture_default_str();
  app.add_option("--port", port, "Port (0 picks a free one)")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  httplib::Server server;
  if (!server.set_mount_point("/", root)) {
    std::cerr << "cannot serve " << root << '\n';
    return 1;
  }
  server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    std::cerr << req.method << ' ' << req.path << ' ' << res.status << '\n';
  });
  if (port == 0) {
    port = server.bind_to_any_port(host);
  } else if (!server.bind_to_port(host, port)) {
    port = -1;
  }
  if (port < 0) {
    std::cerr << "cannot bind " << host << '\n';
    return 1;
  }
  std::cout << "http://" << host << ':' << port << '/' << std::endl;
  return server.listen_after_bind() ? 0 : 1;
}
