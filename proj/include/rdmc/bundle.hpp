#pragma once

// RDM bundle directory:
//   meta.txt      key=value lines (format, n, N_alpha, N_beta, basis_label,
//                 producer, sectors, integrals, onerdm, e_core, shape.<file>)
//   <name>.bin    little-endian float64, row-major, shape from meta.txt
// Files: aaaa.bin bbbb.bin abab.bin, optional d_alpha.bin d_beta.bin,
// optional t.bin eri.bin (eri as an n^2 x n^2 matrix of (ij|kl)).

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rdmc/errors.hpp"
#include "rdmc/rdm_core.hpp"

namespace rdmc {

inline constexpr std::string_view kBundleFormat = "rdmbundle-1";

struct RdmBundle {
  SystemMeta meta;
  std::string basis_label = "toy";
  std::string producer = "rdmc";
  SpinRDMSet rdm;
  std::optional<OneRDM> one;
  std::optional<IntegralSet> ints;

  /// 1-RDM from the bundle, or contracted from the 2-RDM when absent.
  OneRDM one_rdm() const { return one ? *one : contract_to_1rdm(rdm); }
};

namespace detail {

inline void write_f64(const std::filesystem::path& file, const double* data, std::size_t count) {
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw BundleFormatError("cannot open " + file.string() + " for writing");
  std::vector<unsigned char> buf(count * 8);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(data[i]);
    for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xFF);
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw BundleFormatError("write failed for " + file.string());
}

inline std::vector<double> read_f64(const std::filesystem::path& file, std::size_t expected) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw BundleFormatError("missing data file " + file.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() != expected * 8)
    throw BundleFormatError(file.filename().string() + ": expected " + std::to_string(expected * 8) +
                            " bytes, found " + std::to_string(buf.size()));
  std::vector<double> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[i * 8 + b]) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

inline void write_matrix(const std::filesystem::path& dir, const std::string& name, const Eigen::MatrixXd& m,
                         std::map<std::string, std::string>& kv) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  write_f64(dir / (name + ".bin"), rm.data(), static_cast<std::size_t>(rm.size()));
  kv["shape." + name] = std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline std::pair<Eigen::Index, Eigen::Index> parse_shape(const std::map<std::string, std::string>& kv,
                                                         const std::string& name) {
  const auto it = kv.find("shape." + name);
  if (it == kv.end()) throw BundleFormatError("meta.txt lacks shape." + name);
  const auto x = it->second.find('x');
  if (x == std::string::npos) throw BundleFormatError("bad shape for " + name + ": " + it->second);
  try {
    return {std::stoll(it->second.substr(0, x)), std::stoll(it->second.substr(x + 1))};
  } catch (const std::exception&) {
    throw BundleFormatError("bad shape for " + name + ": " + it->second);
  }
}

inline Eigen::MatrixXd read_matrix(const std::filesystem::path& dir, const std::string& name,
                                   const std::map<std::string, std::string>& kv, Eigen::Index rows,
                                   Eigen::Index cols) {
  const auto [r, c] = parse_shape(kv, name);
  if (r != rows || c != cols)
    throw BundleFormatError(name + ": declared shape " + std::to_string(r) + "x" + std::to_string(c) +
                            " does not match expected " + std::to_string(rows) + "x" + std::to_string(cols));
  const auto v = read_f64(dir / (name + ".bin"), static_cast<std::size_t>(r * c));
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), r, c);
}

inline std::map<std::string, std::string> read_meta(const std::filesystem::path& dir) {
  std::ifstream is(dir / "meta.txt");
  if (!is) throw BundleFormatError("missing meta.txt in " + dir.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw BundleFormatError("meta.txt: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw BundleFormatError("meta.txt lacks key " + key);
  return it->second;
}

inline int require_int(const std::map<std::string, std::string>& kv, const std::string& key) {
  try {
    return std::stoi(require(kv, key));
  } catch (const std::invalid_argument&) {
    throw BundleFormatError("meta.txt: key " + key + " is not an integer");
  }
}

}  // namespace detail

/// Writes the bundle to dir atomically (temporary sibling directory, then rename).
inline void save_bundle(const RdmBundle& b, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  b.rdm.check();
  const fs::path target = fs::absolute(dir);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  std::random_device rd;
  const fs::path tmp = target.string() + ".tmp-" + std::to_string(rd());
  fs::create_directories(tmp);
  try {
    std::map<std::string, std::string> kv;
    kv["format"] = std::string(kBundleFormat);
    kv["n"] = std::to_string(b.meta.n);
    kv["N_alpha"] = std::to_string(b.meta.n_alpha);
    kv["N_beta"] = std::to_string(b.meta.n_beta);
    kv["basis_label"] = b.basis_label;
    kv["producer"] = b.producer;
    kv["sectors"] = "aaaa,bbbb,abab";
    kv["integrals"] = b.ints ? "1" : "0";
    kv["onerdm"] = b.one ? "1" : "0";
    for (auto s : kAllSectors) detail::write_matrix(tmp, std::string(to_string(s)), b.rdm.sector(s).data, kv);
    if (b.one) {
      detail::write_matrix(tmp, "d_alpha", b.one->alpha, kv);
      detail::write_matrix(tmp, "d_beta", b.one->beta, kv);
    }
    if (b.ints) {
      const auto n = static_cast<Eigen::Index>(b.ints->n);
      detail::write_matrix(tmp, "t", b.ints->t, kv);
      Eigen::MatrixXd eri(n * n, n * n);
      std::memcpy(eri.data(), b.ints->eri.data(), sizeof(double) * b.ints->eri.size());
      // eri vector is row-major (ij|kl); the column-major buffer above holds its transpose
      detail::write_matrix(tmp, "eri", eri.transpose(), kv);
      std::ostringstream ec;
      ec.precision(17);
      ec << b.ints->e_core;
      kv["e_core"] = ec.str();
    }
    std::ofstream os(tmp / "meta.txt", std::ios::trunc);
    for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
    os.close();
    if (!os) throw BundleFormatError("cannot write meta.txt");
    if (fs::exists(target)) {
      const fs::path old = target.string() + ".old-" + std::to_string(rd());
      fs::rename(target, old);
      fs::rename(tmp, target);
      fs::remove_all(old);
    } else {
      fs::rename(tmp, target);
    }
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
}

inline RdmBundle load_bundle(const std::filesystem::path& dir) {
  const auto kv = detail::read_meta(dir);
  if (detail::require(kv, "format") != kBundleFormat)
    throw BundleFormatError("unsupported bundle format '" + detail::require(kv, "format") + "'");
  RdmBundle b;
  b.meta = {detail::require_int(kv, "n"), detail::require_int(kv, "N_alpha"), detail::require_int(kv, "N_beta")};
  b.meta.validate();
  b.basis_label = detail::require(kv, "basis_label");
  b.producer = detail::require(kv, "producer");
  const int n = b.meta.n;
  b.rdm = SpinRDMSet::zeros(b.meta);
  for (auto s : kAllSectors) {
    const auto d = packed_dim(s, n);
    b.rdm.sector(s).data = detail::read_matrix(dir, std::string(to_string(s)), kv, d, d);
  }
  b.rdm.check();
  if (detail::require(kv, "onerdm") == "1")
    b.one = OneRDM{detail::read_matrix(dir, "d_alpha", kv, n, n), detail::read_matrix(dir, "d_beta", kv, n, n)};
  if (detail::require(kv, "integrals") == "1") {
    IntegralSet ints = IntegralSet::zeros(n);
    ints.t = detail::read_matrix(dir, "t", kv, n, n);
    const Eigen::MatrixXd eri = detail::read_matrix(dir, "eri", kv, Eigen::Index{n} * n, Eigen::Index{n} * n);
    const Eigen::MatrixXd eri_t = eri.transpose();
    std::memcpy(ints.eri.data(), eri_t.data(), sizeof(double) * ints.eri.size());
    if (const auto it = kv.find("e_core"); it != kv.end()) ints.e_core = std::stod(it->second);
    ints.validate(1e-10);
    b.ints = std::move(ints);
  }
  return b;
}

/// FNV-1a 64-bit digest of meta.txt and every data file, in sorted file order.
inline std::uint64_t bundle_hash(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& f : files) {
    for (char c : f.filename().string()) feed(static_cast<unsigned char>(c));
    std::ifstream is(f, std::ios::binary);
    for (std::istreambuf_iterator<char> it(is), end; it != end; ++it) feed(static_cast<unsigned char>(*it));
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace rdmc
