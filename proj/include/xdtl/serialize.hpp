#pragma once

// XFML binary container. All integers are 32-bit unsigned little-endian and
// all reals 64-bit IEEE-754 little-endian; matrices are stored row-major.
//
//   header      "XFML" u32:version
//   transform   header | block
//   coupled     header | block(T_f) | block(T_s) | W[d*d] | gamma | rho
//   dictionary  header | u32:rows u32:cols data[rows*cols] | u32:sparsity
//   matrix      header | u32:rows u32:cols data[rows*cols]
//
// where block = u32:d T[d*d] lambda epsilon u32:tau.

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "xdtl/coupled.hpp"
#include "xdtl/dictbase.hpp"
#include "xdtl/tlcore.hpp"

namespace xdtl::io {

inline constexpr std::uint32_t kFormatVersion = 1;

void write_transform(std::ostream& os, const tl::TransformModel& model);
tl::TransformModel read_transform(std::istream& is);

void write_coupled(std::ostream& os, const coupled::CoupledModel& model);
coupled::CoupledModel read_coupled(std::istream& is);

void write_dictionary(std::ostream& os, const dict::Dictionary& dictionary);
dict::Dictionary read_dictionary(std::istream& is);

void write_matrix(std::ostream& os, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(std::istream& is);

enum class ContainerKind { transform, coupled, dictionary, matrix, unknown };

// Infers the payload kind of an XFML file from its header and exact size.
ContainerKind sniff(const std::filesystem::path& path);

void save(const std::filesystem::path& path, const tl::TransformModel& model);
void save(const std::filesystem::path& path, const coupled::CoupledModel& model);
void save(const std::filesystem::path& path, const dict::Dictionary& dictionary);
void save(const std::filesystem::path& path, const Eigen::MatrixXd& m);

tl::TransformModel load_transform(const std::filesystem::path& path);
coupled::CoupledModel load_coupled(const std::filesystem::path& path);
dict::Dictionary load_dictionary(const std::filesystem::path& path);
Eigen::MatrixXd load_matrix(const std::filesystem::path& path);

}  // namespace xdtl::io
