#include "gsan/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "gsan/config.hpp"
#include "gsan/error.hpp"

namespace gsan {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

enum : std::uint8_t { dtype_f32 = 0, dtype_i8 = 1 };

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

std::uint32_t crc32_of(const void* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    const std::string_view v = bytes_.substr(pos_, n);
    pos_ += n;
    return v;
  }

  std::size_t offset() const noexcept { return pos_; }
  bool done() const noexcept { return pos_ == bytes_.size(); }

  [[noreturn]] void fail(const std::string& what, std::size_t at) const {
    throw FormatError(origin_, what, static_cast<long long>(at));
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) fail(std::string("truncated ") + what, pos_);
  }

  std::string_view bytes_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const NetworkSpec& spec, const TensorTable& tensors) {
  std::string out;
  out.append("GSAN", 4);
  put<std::uint32_t>(out, checkpoint_version);
  const std::string text = emit_network_config(spec);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ValidationError("tensor name too long: " + t.name.substr(0, 64));
    }
    if (t.shape.size() > std::numeric_limits<std::uint8_t>::max()) {
      throw ValidationError("tensor rank too large: " + t.name);
    }
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    const bool is_f32 = std::holds_alternative<std::vector<float>>(t.values);
    put<std::uint8_t>(out, is_f32 ? dtype_f32 : dtype_i8);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    std::size_t count = 1;
    for (std::int64_t d : t.shape) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
      count *= static_cast<std::size_t>(d);
    }
    if (count != t.element_count()) {
      throw ValidationError("tensor " + t.name + ": shape does not match element count");
    }
    const void* payload = nullptr;
    std::size_t bytes = 0;
    if (is_f32) {
      const auto& v = std::get<std::vector<float>>(t.values);
      payload = v.data();
      bytes = v.size() * sizeof(float);
    } else {
      const auto& v = std::get<std::vector<std::int8_t>>(t.values);
      payload = v.data();
      bytes = v.size();
    }
    put<std::uint64_t>(out, bytes);
    out.append(static_cast<const char*>(payload), bytes);
    put<std::uint32_t>(out, crc32_of(payload, bytes));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& origin) {
  Reader r(bytes, origin);
  if (r.take(4, "magic") != "GSAN") r.fail("bad magic (not a gsan checkpoint)", 0);
  const auto version = r.get<std::uint32_t>("version");
  if (version != checkpoint_version) {
    r.fail("unsupported checkpoint version " + std::to_string(version), 4);
  }
  const auto spec_len = r.get<std::uint32_t>("spec length");
  const std::size_t spec_at = r.offset();
  const std::string_view spec_text = r.take(spec_len, "network spec");

  Checkpoint ck;
  try {
    ck.spec = parse_network_config_text(spec_text);
  } catch (const ConfigError& e) {
    r.fail(std::string("embedded network spec is invalid: ") + e.what(), spec_at);
  }

  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = r.get<std::uint16_t>("tensor name length");
    t.name = std::string(r.take(name_len, "tensor name"));
    const std::size_t dtype_at = r.offset();
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype != dtype_f32 && dtype != dtype_i8) {
      r.fail("tensor " + t.name + ": unknown dtype " + std::to_string(dtype), dtype_at);
    }
    const auto rank = r.get<std::uint8_t>("rank");
    std::uint64_t count_elems = 1;
    for (int d = 0; d < rank; ++d) {
      const auto dim = r.get<std::uint32_t>("dims");
      t.shape.push_back(dim);
      count_elems *= dim;
    }
    const std::size_t bytes_at = r.offset();
    const auto payload_bytes = r.get<std::uint64_t>("payload length");
    const std::uint64_t expected = count_elems * (dtype == dtype_f32 ? sizeof(float) : 1);
    if (payload_bytes != expected) {
      r.fail("tensor " + t.name + ": payload length " + std::to_string(payload_bytes) +
                 " does not match shape (" + std::to_string(expected) + " bytes)",
             bytes_at);
    }
    const std::size_t payload_at = r.offset();
    const std::string_view payload = r.take(payload_bytes, "tensor payload");
    const auto crc = r.get<std::uint32_t>("tensor checksum");
    if (crc != crc32_of(payload.data(), payload.size())) {
      r.fail("tensor " + t.name + ": checksum mismatch (corrupted payload)", payload_at);
    }
    if (dtype == dtype_f32) {
      std::vector<float> v(count_elems);
      std::memcpy(v.data(), payload.data(), payload.size());
      t.values = std::move(v);
    } else {
      std::vector<std::int8_t> v(count_elems);
      std::memcpy(v.data(), payload.data(), payload.size());
      t.values = std::move(v);
    }
    ck.tensors.push_back(std::move(t));
  }
  if (!r.done()) r.fail("trailing bytes after tensor table", r.offset());
  return ck;
}

void save_checkpoint(const GhostSANet& model, const std::string& path) {
  const std::string bytes = encode_checkpoint(model.spec(), model.state());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp, "cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError(tmp, "write failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError(path, "cannot move checkpoint into place");
  }
}

Checkpoint read_checkpoint(const std::string& path) {
  return decode_checkpoint(read_text_file(path), path);
}

GhostSANet load_checkpoint(const std::string& path) {
  Checkpoint ck = read_checkpoint(path);
  GhostSANet model(ck.spec, 0);
  try {
    model.load_state(ck.tensors);
  } catch (const ValidationError& e) {
    throw FormatError(path, std::string("tensor table does not match the spec: ") + e.what());
  }
  return model;
}

}  // namespace gsan
