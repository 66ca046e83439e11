#include "zsdiff/archive.hpp"

#include "zsdiff/error.hpp"

#include <fstream>

namespace zsdiff {
namespace {

// torch archives treat '.' as a nesting separator; keep keys flat.
constexpr const char* kArrayPrefix = "a:";
constexpr const char* kStringPrefix = "s:";

std::string encode_key(const std::string& prefix, const std::string& key) {
  std::string out = prefix;
  for (char c : key) out += (c == '.') ? '\x1f' : c;
  return out;
}

std::string decode_key(const std::string& stored) {
  std::string out;
  for (char c : stored.substr(2)) out += (c == '\x1f') ? '.' : c;
  return out;
}

}  // namespace

const torch::Tensor& NamedArrays::array(const std::string& key) const {
  auto it = arrays.find(key);
  if (it == arrays.end()) throw RuntimeError("archive has no array '" + key + "'");
  return it->second;
}

const std::string& NamedArrays::string(const std::string& key) const {
  auto it = strings.find(key);
  if (it == strings.end()) throw RuntimeError("archive has no string '" + key + "'");
  return it->second;
}

void NamedArrays::save(const std::filesystem::path& path) const {
  torch::serialize::OutputArchive out;
  for (const auto& [key, value] : arrays) {
    out.write(encode_key(kArrayPrefix, key), c10::IValue(value.detach().cpu().contiguous()));
  }
  for (const auto& [key, value] : strings) {
    out.write(encode_key(kStringPrefix, key), c10::IValue(value));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  // save_to(filename) names the zip records after the file stem, so identical
  // content written to two paths would differ; go through a buffer instead.
  std::string bytes;
  try {
    out.save_to([&bytes](const void* buf, size_t n) -> size_t {
      bytes.append(static_cast<const char*>(buf), n);
      return n;
    });
  } catch (const c10::Error& e) {
    throw RuntimeError("cannot write archive " + path.string() + ": " + e.what_without_backtrace());
  }
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw RuntimeError("cannot write archive " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

NamedArrays NamedArrays::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw RuntimeError("archive not found: " + path.string());
  torch::serialize::InputArchive in;
  try {
    in.load_from(path.string());
  } catch (const c10::Error& e) {
    throw RuntimeError("cannot read archive " + path.string() + ": " + e.what_without_backtrace());
  }
  NamedArrays result;
  for (const auto& stored : in.keys()) {
    c10::IValue value;
    in.read(stored, value);
    if (stored.rfind(kArrayPrefix, 0) == 0) {
      result.arrays.emplace(decode_key(stored), value.toTensor());
    } else if (stored.rfind(kStringPrefix, 0) == 0) {
      result.strings.emplace(decode_key(stored), value.toStringRef());
    }
  }
  return result;
}

}  // namespace zsdiff
