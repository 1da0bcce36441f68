// HTTP transport for the judge, kept in its own translation unit because of httplib.h.

#include <httplib.h>

#include <regex>
#include <thread>

#include "hk/io.hpp"
#include "hk/judge.hpp"

namespace hk {

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw Error(ErrorKind::Config, "judge endpoint is not an http(s) URL: " + url);
  return {m[1].str(), m[2].matched ? m[2].str() : std::string("/v1/chat/completions")};
}

}  // namespace

HttpJudgeClient::HttpJudgeClient(JudgeConfig config) : config_(std::move(config)) {
  parse_url(config_.endpoint);
}

std::string HttpJudgeClient::complete(const std::string& prompt) {
  auto url = parse_url(config_.endpoint);
  json body{{"model", config_.model},
            {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
            {"temperature", 0}};
  auto payload = body.dump();

  std::string last_error;
  int attempts = std::max(1, config_.max_retries + 1);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(100 * (1 << std::min(attempt, 6))));
    httplib::Client cli(url.scheme_host_port);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout).count();
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout).count() % 1000000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    auto res = cli.Post(url.path, payload, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500 || res->status == 429) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw Error(ErrorKind::Transport, "judge returned HTTP " + std::to_string(res->status));
    try {
      auto reply = json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Transport, std::string("malformed judge response: ") + e.what());
    }
  }
  throw Error(ErrorKind::Transport, "judge unreachable after " + std::to_string(attempts) + " attempts: " + last_error);
}

}  // namespace hk
