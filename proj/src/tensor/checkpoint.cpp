#include "ddmnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ddmnet/errors.hpp"

namespace ddmnet {

namespace {

// On-disk integers and floats are little-endian; so is every supported host.
static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

template <class T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_f64(std::string& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  bool done() const { return pos_ == bytes_.size(); }

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
      return value;
  }

  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw DataError(source_ + ": truncated checkpoint while reading " + what);
    }
  }
  const std::string& bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::vector<NamedTensor>& records) {
  std::string out(kCheckpointMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& r : records) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    const Shape& s = r.tensor.shape();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    for (std::size_t e : s) put<std::uint64_t>(out, e);
    for (double v : r.tensor.values()) put_f64(out, v);
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::string& bytes, const std::string& source) {
  Reader in(bytes, source);
  const std::string magic = in.take(4, "magic");
  if (magic != std::string(kCheckpointMagic, 4)) {
    throw DataError(source + ": bad magic, expected \"DDMN\"");
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw DataError(source + ": unsupported checkpoint version " + std::to_string(version) +
                    " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  std::vector<NamedTensor> records;
  while (!in.done()) {
    const auto name_len = in.get<std::uint32_t>("name length");
    std::string name = in.take(name_len, "name");
    const auto rank = in.get<std::uint32_t>("rank");
    if (rank == 0) throw DataError(source + ": record '" + name + "' has rank 0");
    Shape shape(rank);
    for (auto& e : shape) {
      e = static_cast<std::size_t>(in.get<std::uint64_t>("extent"));
      if (e == 0) throw DataError(source + ": record '" + name + "' has a zero extent");
    }
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = std::bit_cast<double>(in.get<std::uint64_t>("values"));
    records.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values))});
  }
  return records;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& records) {
  write_file_atomic(path, encode_checkpoint(records));
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace ddmnet
