#include "sekge/tensor.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "sekge/error.hpp"

namespace sekge {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'E', 'K', 'T'};

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<unsigned char, sizeof(U)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(U))) {
    throw DataError("truncated tensor file");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  U value;
  std::memcpy(&value, bytes.data(), sizeof(U));
  return value;
}

template <typename T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::f32 : DType::f64;
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor of shape " + shape_string(shape_) + " given " +
                     std::to_string(data_.size()) + " values");
  }
}

template <typename T>
void Tensor<T>::reshape(Shape shape) {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
void write_tensor(std::ostream& out, const Tensor<T>& tensor) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dtype_of<T>()));
  put_le<std::uint64_t>(out, tensor.rank());
  for (auto d : tensor.shape()) put_le<std::uint64_t>(out, d);
  for (T v : tensor.values()) put_le<T>(out, v);
  if (!out) throw DataError("failed writing tensor");
}

template <typename T>
Tensor<T> read_tensor(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw DataError("not a tensor file (bad magic)");
  }
  const auto dtype = static_cast<DType>(get_le<std::uint32_t>(in));
  if (dtype != DType::f32 && dtype != DType::f64) throw DataError("unknown tensor dtype code");
  const auto rank = get_le<std::uint64_t>(in);
  if (rank > 8) throw DataError("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = get_le<std::uint64_t>(in);
  std::vector<T> values(shape_size(shape));
  for (auto& v : values) {
    v = dtype == DType::f32 ? static_cast<T>(get_le<float>(in)) : static_cast<T>(get_le<double>(in));
  }
  return Tensor<T>(std::move(shape), std::move(values));
}

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_tensor(out, tensor);
}

template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_tensor<T>(in);
}

#define SEKGE_INSTANTIATE(T)                                              \
  template class Tensor<T>;                                               \
  template void write_tensor<T>(std::ostream&, const Tensor<T>&);         \
  template Tensor<T> read_tensor<T>(std::istream&);                       \
  template void save_tensor<T>(const std::filesystem::path&, const Tensor<T>&); \
  template Tensor<T> load_tensor<T>(const std::filesystem::path&);

SEKGE_INSTANTIATE(float)
SEKGE_INSTANTIATE(double)
#undef SEKGE_INSTANTIATE

}  // namespace sekge
