#include "wwtp/dioko/model.hpp"

#include <cmath>
#include <random>

namespace wwtp::dioko {

void ModelDims::validate() const {
  if (ny < 1 || nd < 0 || nu < 1 || latent < 1) {
    throw std::invalid_argument("ModelDims: ny, nu, latent must be >= 1 and nd >= 0");
  }
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("ModelDims: hidden widths must be >= 1");
  }
}

Standardizer Standardizer::identity(int n) { return {Vector::Zero(n), Vector::Ones(n)}; }

Standardizer Standardizer::fit(const Matrix& samples, double floor) {
  if (samples.cols() < 1) throw std::invalid_argument("Standardizer::fit: no samples");
  Standardizer s;
  s.mean = samples.rowwise().mean();
  s.scale.resize(samples.rows());
  const double n = static_cast<double>(samples.cols());
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    const double var = (samples.row(i).array() - s.mean(i)).square().sum() / n;
    const double sd = std::sqrt(var);
    s.scale(i) = sd > floor ? sd : 1.0;
  }
  return s;
}

Vector Standardizer::apply(const Vector& x) const {
  if (x.size() != mean.size()) throw std::invalid_argument("Standardizer: dimension mismatch");
  return (x - mean).cwiseQuotient(scale);
}

Vector Standardizer::invert(const Vector& z) const {
  if (z.size() != mean.size()) throw std::invalid_argument("Standardizer: dimension mismatch");
  return z.cwiseProduct(scale) + mean;
}

Matrix Standardizer::apply_cols(const Matrix& x) const {
  if (x.rows() != mean.size()) throw std::invalid_argument("Standardizer: dimension mismatch");
  return ((x.colwise() - mean).array().colwise() / scale.array()).matrix();
}

Model::Model(const ModelDims& dims, std::uint64_t seed, double b_std) : dims_(dims) {
  dims_.validate();
  enc_ = {dims.ny + dims.nd, dims.hidden, dims.latent, 1.0, "enc"};
  nn::init_params(enc_, seed, params_);
  register_koopman(seed, b_std, false);
}

Model Model::zeros(const ModelDims& dims) {
  Model m;
  m.dims_ = dims;
  m.dims_.validate();
  m.enc_ = {dims.ny + dims.nd, dims.hidden, dims.latent, 1.0, "enc"};
  for (std::size_t l = 0; l < m.enc_.layers(); ++l) {
    m.params_.add(m.enc_.weight_name(l), Matrix::Zero(m.enc_.fan_out(l), m.enc_.fan_in(l)), true);
    m.params_.add(m.enc_.bias_name(l), Matrix::Zero(m.enc_.fan_out(l), 1), false);
  }
  m.register_koopman(0, 0.0, true);
  return m;
}

void Model::register_koopman(std::uint64_t seed, double b_std, bool zero) {
  const int p = dims_.latent, m = dims_.nu;
  Matrix a = zero ? Matrix::Zero(p, p) : Matrix(0.99 * Matrix::Identity(p, p));
  Matrix b = Matrix::Zero(p, m);
  if (!zero && b_std > 0.0) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> gauss(0.0, b_std);
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      for (Eigen::Index i = 0; i < b.rows(); ++i) b(i, j) = gauss(rng);
    }
  }
  a_ = params_.add("A", std::move(a), true);
  b_ = params_.add("B", std::move(b), true);
  // start the quadratic head near unit scale for unit-scale latents
  const double qv0 = zero ? 0.0 : -std::log(static_cast<double>(p));
  qv_ = params_.add("q_v", Matrix::Constant(p, 1, qv0), false);
  p_ = params_.add("P", Matrix::Zero(1, p), true);
  bias_ = params_.add("b", Matrix::Zero(1, 1), false);
  y_std = Standardizer::identity(dims_.ny);
  d_std = Standardizer::identity(dims_.nd);
  u_std = Standardizer::identity(dims_.nu);
}

Vector Model::encode_standardized(const Vector& ys, const Vector& ds) const {
  if (ys.size() != dims_.ny || ds.size() != dims_.nd) {
    throw std::invalid_argument("encode: expected y of length " + std::to_string(dims_.ny) +
                                " and d of length " + std::to_string(dims_.nd));
  }
  Matrix x(dims_.ny + dims_.nd, 1);
  x << ys, ds;
  return nn::mlp_eval(enc_, params_, x).col(0);
}

Vector Model::encode(const Vector& y, const Vector& d) const {
  return encode_standardized(y_std.apply(y), d_std.apply(d));
}

std::vector<Vector> Model::rollout(const Vector& psi0, const std::vector<Vector>& u) const {
  if (psi0.size() != dims_.latent) throw std::invalid_argument("rollout: latent size mismatch");
  std::vector<Vector> out;
  out.reserve(u.size() + 1);
  out.push_back(psi0);
  const Matrix& a = A();
  const Matrix& b = B();
  for (const auto& uj : u) {
    if (uj.size() != dims_.nu) throw std::invalid_argument("rollout: input size mismatch");
    out.push_back(a * out.back() + b * uj);
  }
  return out;
}

double Model::cost_head(const Vector& psi) const {
  if (psi.size() != dims_.latent) throw std::invalid_argument("cost_head: latent size mismatch");
  return psi.dot(q_diag().cwiseProduct(psi)) + P().dot(psi) + bias();
}

void Model::to_arrays(nn::ArrayMap& out) const {
  nn::put_params(out, params_);
  Matrix dims(1, 4);
  dims << dims_.ny, dims_.nd, dims_.nu, dims_.latent;
  out["dims"] = dims;
  Matrix hidden(1, static_cast<Eigen::Index>(dims_.hidden.size()));
  for (std::size_t i = 0; i < dims_.hidden.size(); ++i) {
    hidden(0, static_cast<Eigen::Index>(i)) = dims_.hidden[i];
  }
  out["hidden"] = hidden;
  out["std/y_mean"] = y_std.mean;
  out["std/y_scale"] = y_std.scale;
  out["std/d_mean"] = d_std.mean;
  out["std/d_scale"] = d_std.scale;
  out["std/u_mean"] = u_std.mean;
  out["std/u_scale"] = u_std.scale;
  Matrix c(1, 2);
  c << c_mean, c_scale;
  out["std/c"] = c;
}

Model Model::from_arrays(const nn::ArrayMap& in) {
  const Matrix& dm = nn::require(in, "dims");
  const Matrix& hm = nn::require(in, "hidden");
  ModelDims dims;
  dims.ny = static_cast<int>(dm(0, 0));
  dims.nd = static_cast<int>(dm(0, 1));
  dims.nu = static_cast<int>(dm(0, 2));
  dims.latent = static_cast<int>(dm(0, 3));
  dims.hidden.clear();
  for (Eigen::Index i = 0; i < hm.size(); ++i) dims.hidden.push_back(static_cast<int>(hm(0, i)));

  Model m;
  m.dims_ = dims;
  m.dims_.validate();
  m.enc_ = {dims.ny + dims.nd, dims.hidden, dims.latent, 1.0, "enc"};
  m.params_ = nn::get_params(in);
  m.a_ = m.params_.index_of("A");
  m.b_ = m.params_.index_of("B");
  m.qv_ = m.params_.index_of("q_v");
  m.p_ = m.params_.index_of("P");
  m.bias_ = m.params_.index_of("b");
  m.y_std = {nn::require(in, "std/y_mean"), nn::require(in, "std/y_scale")};
  m.d_std = {nn::require(in, "std/d_mean"), nn::require(in, "std/d_scale")};
  m.u_std = {nn::require(in, "std/u_mean"), nn::require(in, "std/u_scale")};
  const Matrix& c = nn::require(in, "std/c");
  m.c_mean = c(0, 0);
  m.c_scale = c(0, 1);
  return m;
}

void Model::save(const std::filesystem::path& path) const {
  nn::ArrayMap a;
  to_arrays(a);
  nn::save_container(path, a);
}

Model Model::load(const std::filesystem::path& path) { return from_arrays(nn::load_container(path)); }

bool Model::operator==(const Model& o) const {
  return dims_.ny == o.dims_.ny && dims_.nd == o.dims_.nd && dims_.nu == o.dims_.nu &&
         dims_.latent == o.dims_.latent && dims_.hidden == o.dims_.hidden &&
         params_ == o.params_ && y_std.mean == o.y_std.mean && y_std.scale == o.y_std.scale &&
         d_std.mean == o.d_std.mean && d_std.scale == o.d_std.scale &&
         u_std.mean == o.u_std.mean && u_std.scale == o.u_std.scale && c_mean == o.c_mean &&
         c_scale == o.c_scale;
}

}  // namespace wwtp::dioko
