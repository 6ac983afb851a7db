#include "uhrnet/tensor_io.hpp"

#include <fstream>
#include <iterator>

#include "binary_io.hpp"

namespace uhrnet {

namespace detail {

std::vector<char> read_all(std::istream& in) {
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace detail

namespace {

constexpr char kMagic[4] = {'H', 'R', 'T', 'F'};

template <typename T>
void write_impl(std::ostream& out, const BasicTensor<T>& t, std::uint8_t dtype) {
  detail::ByteWriter w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kTensorFileVersion);
  w.put<std::uint8_t>(dtype);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.dims()) w.put<std::uint64_t>(static_cast<std::uint64_t>(d));
  w.put_bytes(t.data().data(), t.size() * sizeof(T));
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw Error(ErrorCode::IoError, "failed to write tensor");
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) { write_impl(out, t, 0); }
void write_tensor(std::ostream& out, const Tensor64& t) { write_impl(out, t, 1); }

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  write_tensor(out, t);
}

Tensor read_tensor(std::istream& in) {
  const auto bytes = detail::read_all(in);
  detail::ByteReader r(bytes);
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error(ErrorCode::FormatError, "bad tensor magic", 0);
  const std::size_t version_at = r.offset();
  if (r.get<std::uint32_t>() != kTensorFileVersion) {
    throw Error(ErrorCode::FormatError, "unsupported tensor file version", version_at);
  }
  const std::size_t dtype_at = r.offset();
  const auto dtype = r.get<std::uint8_t>();
  if (dtype > 1) throw Error(ErrorCode::FormatError, "unknown tensor dtype", dtype_at);
  const auto rank = r.get<std::uint8_t>();
  Dims dims;
  for (int i = 0; i < rank; ++i) {
    const std::size_t at = r.offset();
    const auto d = r.get<std::uint64_t>();
    if (d > (std::uint64_t{1} << 40)) throw Error(ErrorCode::FormatError, "implausible dimension", at);
    dims.push_back(static_cast<std::int64_t>(d));
  }
  const auto count = static_cast<std::size_t>(element_count(dims));
  const std::size_t width = dtype == 0 ? sizeof(float) : sizeof(double);
  if (r.remaining() != count * width) {
    throw Error(ErrorCode::FormatError,
                "payload holds " + std::to_string(r.remaining()) + " bytes, expected " +
                    std::to_string(count * width),
                r.offset());
  }
  std::vector<float> data(count);
  if (dtype == 0) {
    r.get_bytes(data.data(), count * sizeof(float));
  } else {
    std::vector<double> wide(count);
    r.get_bytes(wide.data(), count * sizeof(double));
    for (std::size_t i = 0; i < count; ++i) data[i] = static_cast<float>(wide[i]);
  }
  return Tensor(std::move(dims), std::move(data));
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace uhrnet
