#include "msfa/numcore/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace msfa {

namespace {

constexpr char kMagic[8] = {'M', 'S', 'F', 'A', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ContractError("checkpoint: truncated data");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParamSet& params) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kCheckpointFormatVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(sizeof(Real)));
  put<std::uint8_t>(out, 1);
  put<std::uint16_t>(out, 0);
  put<std::uint64_t>(out, params.version());
  put<std::uint64_t>(out, params.entries().size());
  for (const auto& [path, value] : params.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(path.size()));
    out.insert(out.end(), path.begin(), path.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(value.rank()));
    for (std::size_t d : value.shape()) put<std::uint64_t>(out, d);
    for (Real v : value.data()) put<Real>(out, v);
  }
  return out;
}

ParamSet decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  if (in.get_string(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw ContractError("checkpoint: bad magic");
  }
  const auto format = in.get<std::uint32_t>();
  if (format != kCheckpointFormatVersion) {
    throw ContractError("checkpoint: unsupported format version " + std::to_string(format));
  }
  const auto scalar_bytes = in.get<std::uint8_t>();
  if (scalar_bytes != sizeof(Real)) {
    throw ContractError("checkpoint: stored with " + std::to_string(scalar_bytes) +
                        "-byte scalars, this build uses " + std::to_string(sizeof(Real)));
  }
  if (in.get<std::uint8_t>() != 1) throw ContractError("checkpoint: not little-endian");
  in.get<std::uint16_t>();
  const auto version = in.get<std::uint64_t>();
  const auto count = in.get<std::uint64_t>();
  ParamSet params;
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto len = in.get<std::uint32_t>();
    std::string path = in.get_string(len);
    const auto rank = in.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
    Array value(shape);
    for (Real& v : value.data()) v = in.get<Real>();
    params.add(path, std::move(value));
  }
  if (!in.done()) throw ContractError("checkpoint: trailing bytes");
  params.set_version(version);
  return params;
}

void save_checkpoint(const std::filesystem::path& file, const ParamSet& params) {
  const auto bytes = encode_checkpoint(params);
  const auto tmp = std::filesystem::path(file).concat(".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, file);
}

ParamSet load_checkpoint(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint " + file.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace msfa
