#include "hk/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "hk/error.hpp"

namespace hk {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::Range: return "range";
    case ErrorKind::EvidenceMissing: return "evidence-missing";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Config: return "config";
    case ErrorKind::Lookup: return "lookup";
    case ErrorKind::State: return "state";
    case ErrorKind::Arity: return "arity";
    case ErrorKind::Alignment: return "alignment";
    case ErrorKind::Transport: return "transport";
    case ErrorKind::Degenerate: return "degenerate-data";
    case ErrorKind::Dependency: return "dependency";
    case ErrorKind::Estimation: return "estimation";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

void for_each_jsonl(const fs::path& path, const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::Parse, path.filename().string() + " line " + std::to_string(line_no) +
                                        ": " + e.what());
    }
    if (!obj.is_object()) {
      throw Error(ErrorKind::Parse, path.filename().string() + " line " + std::to_string(line_no) +
                                        ": expected a JSON object");
    }
    if (obj.contains("_meta")) continue;
    fn(obj, line_no);
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorKind::Io, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::Io, "sha256 failed");
  }
  std::ostringstream ss;
  for (unsigned int i = 0; i < len; ++i) ss << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return ss.str();
}

std::uint64_t stable_hash64(std::string_view data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
T require_field(const json& obj, const char* field, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) {
    throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": missing field \"" + field + "\"");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": field \"" + field + "\" has the wrong type");
  }
}

template std::string require_field<std::string>(const json&, const char*, std::size_t);
template double require_field<double>(const json&, const char*, std::size_t);
template std::int64_t require_field<std::int64_t>(const json&, const char*, std::size_t);
template bool require_field<bool>(const json&, const char*, std::size_t);

}  // namespace hk
