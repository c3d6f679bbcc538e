#pragma once

#include <memory>
#include <string>

#include "reid/config.hpp"

namespace reid {

// HTTP front end over a gallery directory. Routes and payloads are listed
// in docs/API.md.
class Service {
 public:
  // Opens the gallery at gallery_dir, creating an empty one when the
  // directory has no manifest. static_dir, when set, is served at "/".
  Service(const AppConfig& config, const std::string& gallery_dir,
          const std::string& static_dir = {});
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind();
  // Serves until stop(); call after bind().
  void run();
  // Starts run() on a background thread and waits until it accepts.
  void start();
  // Waits for a started server to stop.
  void wait();
  void stop();

  // Blocks until every queued identification job has finished.
  void drain();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace reid
