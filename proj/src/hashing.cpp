#include "sake/hashing.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include "sake/binary_io.hpp"
#include "sake/errors.hpp"
#include "sake/rng.hpp"

namespace sake {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::string_view kCodecMagic = "SAKEITQ1";

Mat random_orthogonal(std::size_t c, std::uint64_t seed) {
  Rng rng = Rng::keyed({seed, 0x69747172ULL});
  Mat g(c, c);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ();
  const Mat r = qr.matrixQR();
  // Fix column signs so the factorisation is unique.
  for (std::size_t j = 0; j < c; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  return q;
}

Mat signs(const Mat& z) { return z.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; }); }

}  // namespace

BinaryCode BinaryCode::from_bits(std::span<const std::uint8_t> bits) {
  BinaryCode code;
  code.bits = bits.size();
  code.bytes.assign((bits.size() + 7) / 8, 0);
  for (std::size_t b = 0; b < bits.size(); ++b) {
    if (bits[b]) code.bytes[b / 8] |= static_cast<std::uint8_t>(1u << (b % 8));
  }
  return code;
}

std::vector<double> ItqCodec::project(std::span<const float> feature) const {
  if (feature.size() != dim) {
    throw ContractViolation("encode: feature has length " + std::to_string(feature.size()) + ", codec expects " +
                            std::to_string(dim));
  }
  Eigen::RowVectorXd v(dim);
  for (std::size_t j = 0; j < dim; ++j) v[j] = static_cast<double>(feature[j]) - mean[j];
  const Eigen::Map<const Mat> w(projection.data(), dim, bits);
  const Eigen::Map<const Mat> r(rotation.data(), bits, bits);
  const Eigen::RowVectorXd z = (v * w) * r;
  return std::vector<double>(z.data(), z.data() + bits);
}

ItqCodec itq_fit(const Tensor<float>& features, std::size_t bits, std::size_t iterations, std::uint64_t seed) {
  if (features.rank() != 2) throw ContractViolation("itq_fit: features must be [n, M]");
  const std::size_t n = features.dim(0), m = features.dim(1);
  if (bits == 0 || bits > m) throw ContractViolation("itq_fit: code length must be in [1, M]");
  if (n <= bits) throw ContractViolation("itq_fit: need more training rows than bits");
  if (!features.all_finite()) throw ContractViolation("itq_fit: non-finite feature");

  ItqCodec codec;
  codec.dim = m;
  Mat x(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) x(i, j) = features.at(i, j);
  }
  const Eigen::RowVectorXd mu = x.colwise().mean();
  codec.mean.assign(mu.data(), mu.data() + m);
  const Mat v = x.rowwise() - mu;

  const Mat cov = (v.transpose() * v) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  const Eigen::VectorXd values = eig.eigenvalues();  // ascending
  const double top = std::max(values[m - 1], 0.0);
  std::size_t rank = 0;
  for (std::size_t j = 0; j < m; ++j) rank += values[j] > 1e-10 * std::max(top, 1e-300);
  if (rank == 0) throw ContractViolation("itq_fit: training features have zero variance");
  if (rank < bits) {
    codec.warning = "PCA rank " + std::to_string(rank) + " is below the requested " + std::to_string(bits) +
                    " bits; code length reduced";
    bits = rank;
  }
  codec.bits = bits;
  Mat w(m, bits);
  for (std::size_t k = 0; k < bits; ++k) {
    Eigen::VectorXd col = eig.eigenvectors().col(static_cast<Eigen::Index>(m - 1 - k));
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col[arg] < 0) col = -col;
    w.col(static_cast<Eigen::Index>(k)) = col;
  }
  codec.projection.assign(w.data(), w.data() + w.size());

  const Mat p = v * w;
  Mat r = random_orthogonal(bits, seed);
  const std::size_t rounds = std::max<std::size_t>(iterations, 1);
  for (std::size_t it = 0; it < rounds; ++it) {
    const Mat z = p * r;
    const Mat b = signs(z);
    codec.quantization_loss.push_back((b - z).squaredNorm());
    if (it + 1 == rounds) break;
    // argmin_R ||B - P R||_F over orthogonal R: R = U V^T from svd(P^T B).
    Eigen::JacobiSVD<Mat> svd(p.transpose() * b, Eigen::ComputeFullU | Eigen::ComputeFullV);
    r = svd.matrixU() * svd.matrixV().transpose();
  }
  codec.rotation.assign(r.data(), r.data() + r.size());
  codec.iterations = rounds;
  return codec;
}

BinaryCode encode(const ItqCodec& codec, std::span<const float> feature) {
  const auto z = codec.project(feature);
  std::vector<std::uint8_t> bits(z.size());
  for (std::size_t b = 0; b < z.size(); ++b) bits[b] = z[b] >= 0.0 ? 1 : 0;
  return BinaryCode::from_bits(bits);
}

std::size_t hamming_distance(const BinaryCode& a, const BinaryCode& b) {
  if (a.bits != b.bits || a.bytes.size() != b.bytes.size()) {
    throw ContractViolation("hamming_distance: codes of length " + std::to_string(a.bits) + " and " +
                            std::to_string(b.bits));
  }
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.bytes.size(); ++i) {
    d += static_cast<std::size_t>(std::popcount(static_cast<unsigned>(a.bytes[i] ^ b.bytes[i])));
  }
  return d;
}

void save_codec(const ItqCodec& codec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractViolation("cannot write " + path.string());
  binio::write_magic(out, kCodecMagic);
  binio::write_u32(out, static_cast<std::uint32_t>(codec.dim));
  binio::write_u32(out, static_cast<std::uint32_t>(codec.bits));
  for (const auto* v : {&codec.mean, &codec.projection, &codec.rotation}) {
    for (double x : *v) binio::write_f32(out, static_cast<float>(x));
  }
  if (!out) throw ContractViolation("failed writing " + path.string());
}

ItqCodec load_codec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open codec " + path.string());
  binio::expect_magic(in, kCodecMagic);
  ItqCodec codec;
  codec.dim = binio::read_u32(in);
  codec.bits = binio::read_u32(in);
  if (codec.dim == 0 || codec.bits == 0 || codec.bits > codec.dim) {
    throw ContractViolation("codec header is inconsistent");
  }
  auto read = [&](std::vector<double>& v, std::size_t count) {
    v.resize(count);
    for (double& x : v) x = binio::read_f32(in);
  };
  read(codec.mean, codec.dim);
  read(codec.projection, codec.dim * codec.bits);
  read(codec.rotation, codec.bits * codec.bits);
  return codec;
}

void save_codes(std::span<const BinaryCode> codes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractViolation("cannot write " + path.string());
  const std::size_t bits = codes.empty() ? 0 : codes.front().bits;
  binio::write_u32(out, static_cast<std::uint32_t>(codes.size()));
  binio::write_u32(out, static_cast<std::uint32_t>(bits));
  for (const BinaryCode& c : codes) {
    if (c.bits != bits) throw ContractViolation("save_codes: codes differ in length");
    out.write(reinterpret_cast<const char*>(c.bytes.data()), static_cast<std::streamsize>(c.bytes.size()));
  }
  if (!out) throw ContractViolation("failed writing " + path.string());
}

std::vector<BinaryCode> load_codes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open codes " + path.string());
  const std::uint32_t count = binio::read_u32(in);
  const std::uint32_t bits = binio::read_u32(in);
  std::vector<BinaryCode> codes(count);
  for (BinaryCode& c : codes) {
    c.bits = bits;
    c.bytes.resize((bits + 7) / 8);
    binio::read_exact(in, reinterpret_cast<char*>(c.bytes.data()), c.bytes.size(), "code");
  }
  return codes;
}

}  // namespace sake
