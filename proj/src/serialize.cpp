#include "xdtl/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "xdtl/errors.hpp"

namespace xdtl::io {

using Eigen::Index;
using Eigen::MatrixXd;

namespace {

constexpr std::array<char, 4> kMagic{'X', 'F', 'M', 'L'};

void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<unsigned char, 4> b{};
  for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b.data()), 4);
}

void put_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<unsigned char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b.data()), 8);
}

void read_exact(std::istream& is, unsigned char* dst, std::size_t n) {
  is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw DataError("XFML: truncated file");
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  read_exact(is, b.data(), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  std::array<unsigned char, 8> b{};
  read_exact(is, b.data(), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  return std::bit_cast<double>(bits);
}

void put_header(std::ostream& os) {
  os.write(kMagic.data(), 4);
  put_u32(os, kFormatVersion);
}

void check_header(std::istream& is) {
  std::array<unsigned char, 4> magic{};
  read_exact(is, magic.data(), 4);
  if (std::memcmp(magic.data(), kMagic.data(), 4) != 0) throw DataError("XFML: bad magic bytes");
  const std::uint32_t version = get_u32(is);
  if (version != kFormatVersion) {
    throw DataError("XFML: unsupported format version " + std::to_string(version));
  }
}

std::uint32_t checked_u32(Index v, const char* what) {
  if (v < 0 || v > static_cast<Index>(UINT32_MAX)) {
    throw ArgumentError(std::string("XFML: ") + what + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

void put_rowmajor(std::ostream& os, const MatrixXd& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) put_f64(os, m(i, j));
}

MatrixXd get_rowmajor(std::istream& is, Index rows, Index cols) {
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = get_f64(is);
  return m;
}

void put_block(std::ostream& os, const MatrixXd& T, const tl::TransformParams& p) {
  if (T.rows() != T.cols()) throw ArgumentError("XFML: transform must be square");
  put_u32(os, checked_u32(T.rows(), "dimension"));
  put_rowmajor(os, T);
  put_f64(os, p.lambda);
  put_f64(os, p.epsilon);
  put_u32(os, checked_u32(p.tau, "tau"));
}

std::pair<MatrixXd, tl::TransformParams> get_block(std::istream& is) {
  const Index d = get_u32(is);
  std::pair<MatrixXd, tl::TransformParams> out;
  out.first = get_rowmajor(is, d, d);
  out.second.lambda = get_f64(is);
  out.second.epsilon = get_f64(is);
  out.second.tau = static_cast<int>(get_u32(is));
  return out;
}

void expect_eof(std::istream& is) {
  if (is.peek() != std::char_traits<char>::eof()) throw DataError("XFML: trailing bytes");
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path.string());
  return is;
}

void finish(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw DataError("write failed: " + path.string());
}

}  // namespace

void write_transform(std::ostream& os, const tl::TransformModel& model) {
  put_header(os);
  put_block(os, model.T, model.params);
}

tl::TransformModel read_transform(std::istream& is) {
  check_header(is);
  auto [T, params] = get_block(is);
  tl::TransformModel model;
  model.T = std::move(T);
  model.params = params;
  return model;
}

void write_coupled(std::ostream& os, const coupled::CoupledModel& model) {
  if (model.T_f.rows() != model.T_s.rows() || model.W.rows() != model.T_f.rows() ||
      model.W.cols() != model.T_f.rows()) {
    throw ArgumentError("XFML: coupled model matrices disagree in size");
  }
  put_header(os);
  put_block(os, model.T_f, model.params);
  put_block(os, model.T_s, model.params);
  put_rowmajor(os, model.W);
  put_f64(os, model.gamma);
  put_f64(os, model.rho);
}

coupled::CoupledModel read_coupled(std::istream& is) {
  check_header(is);
  auto [T_f, face_params] = get_block(is);
  auto [T_s, skull_params] = get_block(is);
  if (T_f.rows() != T_s.rows()) throw DataError("XFML: coupled transforms differ in size");
  coupled::CoupledModel model;
  model.W = get_rowmajor(is, T_f.rows(), T_f.rows());
  model.gamma = get_f64(is);
  model.rho = get_f64(is);
  model.T_f = std::move(T_f);
  model.T_s = std::move(T_s);
  model.params = face_params;
  return model;
}

void write_matrix(std::ostream& os, const MatrixXd& m) {
  put_header(os);
  put_u32(os, checked_u32(m.rows(), "rows"));
  put_u32(os, checked_u32(m.cols(), "cols"));
  put_rowmajor(os, m);
}

MatrixXd read_matrix(std::istream& is) {
  check_header(is);
  const Index rows = get_u32(is);
  const Index cols = get_u32(is);
  return get_rowmajor(is, rows, cols);
}

void write_dictionary(std::ostream& os, const dict::Dictionary& dictionary) {
  write_matrix(os, dictionary.D);
  put_u32(os, checked_u32(dictionary.sparsity, "sparsity"));
}

dict::Dictionary read_dictionary(std::istream& is) {
  dict::Dictionary out;
  out.D = read_matrix(is);
  out.sparsity = static_cast<int>(get_u32(is));
  return out;
}

ContainerKind sniff(const std::filesystem::path& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) return ContainerKind::unknown;
  std::ifstream is = open_in(path);
  try {
    check_header(is);
    const std::uint64_t a = get_u32(is);
    const std::uint64_t b = get_u32(is);
    const std::uint64_t transform = 8 + 4 + 8 * a * a + 20;
    const std::uint64_t coupled = 8 + 2 * (4 + 8 * a * a + 20) + 8 * a * a + 16;
    const std::uint64_t matrix = 8 + 8 + 8 * a * b;
    if (size == transform) return ContainerKind::transform;
    if (size == coupled) return ContainerKind::coupled;
    if (size == matrix) return ContainerKind::matrix;
    if (size == matrix + 4) return ContainerKind::dictionary;
  } catch (const DataError&) {
  }
  return ContainerKind::unknown;
}

void save(const std::filesystem::path& path, const tl::TransformModel& model) {
  auto os = open_out(path);
  write_transform(os, model);
  finish(os, path);
}

void save(const std::filesystem::path& path, const coupled::CoupledModel& model) {
  auto os = open_out(path);
  write_coupled(os, model);
  finish(os, path);
}

void save(const std::filesystem::path& path, const dict::Dictionary& dictionary) {
  auto os = open_out(path);
  write_dictionary(os, dictionary);
  finish(os, path);
}

void save(const std::filesystem::path& path, const MatrixXd& m) {
  auto os = open_out(path);
  write_matrix(os, m);
  finish(os, path);
}

tl::TransformModel load_transform(const std::filesystem::path& path) {
  auto is = open_in(path);
  auto model = read_transform(is);
  expect_eof(is);
  return model;
}

coupled::CoupledModel load_coupled(const std::filesystem::path& path) {
  auto is = open_in(path);
  auto model = read_coupled(is);
  expect_eof(is);
  return model;
}

dict::Dictionary load_dictionary(const std::filesystem::path& path) {
  auto is = open_in(path);
  auto out = read_dictionary(is);
  expect_eof(is);
  return out;
}

MatrixXd load_matrix(const std::filesystem::path& path) {
  auto is = open_in(path);
  auto m = read_matrix(is);
  expect_eof(is);
  return m;
}

}  // namespace xdtl::io
