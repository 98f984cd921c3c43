#pragma once

// Adapter for a detector running in a separate process. The process is
// started through /bin/sh and spoken to with newline-delimited JSON on its
// standard input and output:
//
//   -> {"op":"hello","version":1}
//   <- {"ok":true,"name":"..."}
//   -> {"op":"detect","frame":17,"path":"frames/frame_000017.pgm","category":"L"}
//   <- {"detections":[{"category":"L","x":100,"y":50,"w":40,"h":40,"conf":0.92}]}
//   -> {"op":"bye"}            (process must exit with status 0)
//
// One request is in flight at a time; callers serialize access.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "datkit/detector.hpp"
#include "datkit/error.hpp"

namespace datkit {

/// Parses one detect response line.
inline DetectorResult parse_detect_response(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError("response is not valid JSON", line);
  }
  if (!j.is_object() || !j.contains("detections") || !j.at("detections").is_array())
    throw ProtocolError("response lacks a 'detections' array", line);
  DetectorResult result;
  try {
    for (const auto& d : j.at("detections")) {
      const auto cat = category_from_string(d.at("category").get<std::string>());
      if (!cat || *cat == Category::N) throw ProtocolError("detection has invalid category", line);
      Detection det{{d.at("x").get<double>(), d.at("y").get<double>(), d.at("w").get<double>(), d.at("h").get<double>()},
                    *cat,
                    d.at("conf").get<double>()};
      if (!det.box.valid()) throw ProtocolError("detection box is degenerate", line);
      if (!(det.confidence >= 0.0 && det.confidence <= 1.0)) throw ProtocolError("conf outside [0,1]", line);
      result.detections.push_back(det);
    }
    if (j.contains("cost")) result.cost_units = j.at("cost").get<double>();
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError("detection entry is malformed", line);
  }
  result.detections = one_per_wearer_category(std::move(result.detections));
  return result;
}

class ExternalDetector final : public Detector {
 public:
  /// Starts `command` and performs the hello exchange. Frame paths sent in
  /// requests are `frames_dir / frame_%06d.pgm`.
  ExternalDetector(const std::string& command, std::filesystem::path frames_dir,
                   std::chrono::milliseconds timeout = std::chrono::seconds(10))
      : frames_dir_(std::move(frames_dir)), timeout_(timeout) {
    spawn(command);
    try {
      handshake();
    } catch (...) {
      kill_child();
      throw;
    }
  }

  ExternalDetector(const ExternalDetector&) = delete;
  ExternalDetector& operator=(const ExternalDetector&) = delete;

  ~ExternalDetector() override {
    try {
      shutdown();
    } catch (...) {
    }
  }

  const std::string& name() const noexcept { return name_; }

  DetectorResult detect(const Frame& frame, Category category) override {
    nlohmann::ordered_json req;
    req["op"] = "detect";
    req["frame"] = frame.index;
    req["path"] = (frames_dir_ / frame_filename(frame.index)).generic_string();
    req["category"] = to_string(category);
    send(req.dump());
    return parse_detect_response(receive());
  }

  /// Sends bye and reaps the process. Returns its exit status; a non-zero
  /// status is reported as ChannelClosed.
  int shutdown() {
    if (pid_ <= 0) return exit_status_;
    if (to_child_ >= 0) {
      try {
        send(R"({"op":"bye"})");
      } catch (const ExternalDetectorError&) {
      }
      ::close(to_child_);
      to_child_ = -1;
    }
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    int status = 0;
    while (true) {
      const pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_) break;
      if (r < 0) {
        status = 0;
        break;
      }
      if (std::chrono::steady_clock::now() > deadline) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        break;
      }
      ::usleep(2000);
    }
    pid_ = -1;
    if (from_child_ >= 0) ::close(from_child_);
    from_child_ = -1;
    exit_status_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
    if (exit_status_ != 0) throw ChannelClosed("external detector exited with status " + std::to_string(exit_status_));
    return exit_status_;
  }

 private:
  void handshake() {
    send(R"({"op":"hello","version":1})");
    const std::string reply = receive();
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(reply);
    } catch (const nlohmann::json::exception&) {
      throw ProtocolError("handshake reply is not valid JSON", reply);
    }
    if (!j.is_object() || !j.contains("ok") || j.at("ok") != true) throw ProtocolError("handshake rejected", reply);
    if (j.contains("name") && j.at("name").is_string()) name_ = j.at("name").get<std::string>();
  }

  void kill_child() noexcept {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    to_child_ = from_child_ = -1;
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
    pid_ = -1;
  }

  void spawn(const std::string& command) {
    ::signal(SIGPIPE, SIG_IGN);
    int in_pipe[2], out_pipe[2];
    if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0)
      throw DetectorUnavailable(std::string("pipe failed: ") + std::strerror(errno));
    const pid_t pid = ::fork();
    if (pid < 0) throw DetectorUnavailable(std::string("fork failed: ") + std::strerror(errno));
    if (pid == 0) {
      ::dup2(in_pipe[0], STDIN_FILENO);
      ::dup2(out_pipe[1], STDOUT_FILENO);
      ::close(in_pipe[0]);
      ::close(in_pipe[1]);
      ::close(out_pipe[0]);
      ::close(out_pipe[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    ::fcntl(to_child_, F_SETFD, FD_CLOEXEC);
    ::fcntl(from_child_, F_SETFD, FD_CLOEXEC);
    pid_ = pid;
  }

  void send(const std::string& line) {
    if (to_child_ < 0) throw ChannelClosed("external detector channel is closed");
    const std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::write(to_child_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ChannelClosed("external detector closed its input");
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string receive() {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    while (true) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto remaining =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (remaining.count() <= 0)
        throw DetectorUnavailable("external detector timed out after " + std::to_string(timeout_.count()) + " ms");
      pollfd pfd{from_child_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw DetectorUnavailable(std::string("poll failed: ") + std::strerror(errno));
      }
      if (rc == 0) continue;
      char chunk[4096];
      const ssize_t n = ::read(from_child_, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ChannelClosed("read from external detector failed");
      }
      if (n == 0) throw ChannelClosed("external detector exited");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  std::filesystem::path frames_dir_;
  std::chrono::milliseconds timeout_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  int exit_status_ = 0;
  std::string buffer_;
  std::string name_;
};

}  // namespace datkit
