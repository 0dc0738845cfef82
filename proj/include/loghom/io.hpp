#pragma once

// Field containers on disk.
//
// Binary layout (little-endian): uint64 dim, uint64 n_per_side,
// float64 side_length, uint64 components, uint64 seed, then float64 values
// in row-major site order with the components of a site stored together.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>

#include "loghom/correctors.hpp"
#include "loghom/errors.hpp"
#include "loghom/lattice.hpp"

namespace loghom {

static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

inline void write_field_binary(const std::filesystem::path& path, const LatticeField& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  const std::uint64_t header[2] = {static_cast<std::uint64_t>(f.grid.dim), static_cast<std::uint64_t>(f.grid.n_per_side)};
  const double L = f.grid.side_length;
  const std::uint64_t tail[2] = {static_cast<std::uint64_t>(f.components), f.meta.seed};
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  out.write(reinterpret_cast<const char*>(&L), sizeof L);
  out.write(reinterpret_cast<const char*>(tail), sizeof tail);
  std::vector<double> buf(static_cast<std::size_t>(f.components));
  for (std::size_t s = 0; s < f.sites(); ++s) {
    for (int c = 0; c < f.components; ++c) buf[static_cast<std::size_t>(c)] = f.at(s, c);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(double)));
  }
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

inline LatticeField read_field_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::uint64_t header[2];
  double L = 0.0;
  std::uint64_t tail[2];
  in.read(reinterpret_cast<char*>(header), sizeof header);
  in.read(reinterpret_cast<char*>(&L), sizeof L);
  in.read(reinterpret_cast<char*>(tail), sizeof tail);
  if (!in) throw Error(ErrorKind::IoError, "truncated header in " + path.string());
  LatticeField f(LatticeGrid(static_cast<int>(header[0]), static_cast<int>(header[1]), L), static_cast<int>(tail[0]));
  f.meta.seed = tail[1];
  std::vector<double> buf(static_cast<std::size_t>(f.components));
  for (std::size_t s = 0; s < f.sites(); ++s) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(double)));
    for (int c = 0; c < f.components; ++c) f.at(s, c) = buf[static_cast<std::size_t>(c)];
  }
  if (!in) throw Error(ErrorKind::IoError, "truncated payload in " + path.string());
  return f;
}

/// One row per site: coordinates then component values.
inline void write_field_csv(const std::filesystem::path& path, const LatticeField& f) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  const char* axes[] = {"i", "j", "k"};
  for (int j = 0; j < f.grid.dim; ++j) out << axes[j] << ',';
  for (int c = 0; c < f.components; ++c) out << "c" << c << (c + 1 < f.components ? "," : "\n");
  out << std::setprecision(17);
  for (std::size_t s = 0; s < f.sites(); ++s) {
    const Coord x = f.grid.coords(s);
    for (int j = 0; j < f.grid.dim; ++j) out << x[j] << ',';
    for (int c = 0; c < f.components; ++c) out << f.at(s, c) << (c + 1 < f.components ? "," : "\n");
  }
}

/// Writes phi_i.bin, sigma_<i><j><k>.bin and manifest.txt into `dir`.
inline void write_corrector_set(const std::filesystem::path& dir, const CorrectorSet& cs,
                                const std::map<std::string, std::string>& extra = {}) {
  std::filesystem::create_directories(dir);
  const int d = cs.grid.dim;
  for (int i = 0; i < d; ++i) write_field_binary(dir / ("phi_" + std::to_string(i) + ".bin"), cs.phi[static_cast<std::size_t>(i)]);
  if (!cs.sigma_store.empty()) {
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        for (int k = j + 1; k < d; ++k) {
          const auto& f = cs.sigma_store[static_cast<std::size_t>(i * skew_pairs(d) + skew_pair_index(d, j, k))];
          write_field_binary(dir / ("sigma_" + std::to_string(i) + std::to_string(j) + std::to_string(k) + ".bin"), f);
        }
      }
    }
  }
  std::ofstream out(dir / "manifest.txt");
  if (!out) throw Error(ErrorKind::IoError, "cannot write manifest in " + dir.string());
  out << std::setprecision(17);
  for (const auto& [k, v] : extra) out << k << " = " << v << '\n';
  out << "seed = " << cs.coefficient.meta.seed << '\n';
  out << "truncation_M = " << (cs.truncation_M ? std::to_string(*cs.truncation_M) : std::string("none")) << '\n';
  for (int i = 0; i < d; ++i) {
    for (int k = 0; k < d; ++k) out << "ahom_sample_" << i << k << " = " << cs.ahom_sample(i, k) << '\n';
  }
  for (std::size_t r = 0; r < cs.reports.size(); ++r) {
    out << "solve_" << r << "_iterations = " << cs.reports[r].iterations << '\n';
    out << "solve_" << r << "_residual = " << cs.reports[r].relative_residual << '\n';
  }
  out << "sigma_reconstruction_residual = " << cs.sigma_reconstruction_residual << '\n';
}

}  // namespace loghom
