#include "lgtok/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lgtok/error.hpp"

namespace lgtok::nn {

namespace {

constexpr std::string_view kMagic = "LGTOK1\n";
static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

}  // namespace

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  fail(ErrorKind::kFormat, "checkpoint has no tensor named " + name);
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& entry : tensors) {
    if (entry.first == name) return true;
  }
  return false;
}

void Checkpoint::add_params(const ParamStore& store, const std::string& prefix) {
  for (const auto& p : store) add(prefix + p->name, p->value);
}

void Checkpoint::load_params(ParamStore& store, const std::string& prefix) const {
  for (auto& p : store) {
    const Tensor& t = get(prefix + p->name);
    require(t.shape() == p->value.shape(), ErrorKind::kFormat,
            "checkpoint tensor " + prefix + p->name + " has shape " + t.shape_string() +
                ", model expects " + p->value.shape_string());
    p->value = t;
  }
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json manifest;
  manifest["meta"] = ckpt.meta;
  manifest["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    manifest["tensors"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size() * sizeof(float);
  }
  std::string out(kMagic);
  out += manifest.dump();
  out += "\n\n";
  const std::size_t header = out.size();
  out.resize(header + offset);
  std::size_t pos = header;
  for (const auto& entry : ckpt.tensors) {
    const Tensor& t = entry.second;
    std::memcpy(out.data() + pos, t.data(), t.size() * sizeof(float));
    pos += t.size() * sizeof(float);
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  require(bytes.compare(0, kMagic.size(), kMagic) == 0, ErrorKind::kFormat,
          "not a checkpoint: missing LGTOK1 header");
  const std::size_t end = bytes.find("\n\n", kMagic.size());
  require(end != std::string::npos, ErrorKind::kTruncated, "checkpoint manifest is unterminated");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(kMagic.size(), end - kMagic.size()));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }
  const std::size_t payload = end + 2;
  const std::size_t available = bytes.size() - payload;

  Checkpoint ckpt;
  try {
    ckpt.meta = manifest.at("meta");
    std::size_t expected = 0;
    for (const auto& entry : manifest.at("tensors")) {
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      const auto offset = entry.at("offset").get<std::size_t>();
      std::size_t count = 1;
      for (std::size_t s : shape) count *= s;
      const std::size_t bytes_needed = count * sizeof(float);
      require(offset == expected, ErrorKind::kFormat, "checkpoint tensor offsets are not contiguous");
      require(offset + bytes_needed <= available, ErrorKind::kTruncated,
              "checkpoint payload ends inside tensor " + entry.at("name").get<std::string>());
      std::vector<float> values(count);
      std::memcpy(values.data(), bytes.data() + payload + offset, bytes_needed);
      ckpt.add(entry.at("name").get<std::string>(), Tensor(shape, std::move(values)));
      expected += bytes_needed;
    }
    require(expected == available, ErrorKind::kFormat,
            "checkpoint length mismatch: manifest declares " + std::to_string(expected) +
                " payload bytes, file has " + std::to_string(available));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed checkpoint manifest: ") + e.what());
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  const std::string bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::kIo, "failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

std::uint64_t json_hash(const nlohmann::json& j) {
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
  return out;
}

}  // namespace lgtok::nn
