#include "emx/covgen.hpp"

#include <Eigen/Dense>

#include <nlohmann/json.hpp>
#include <unsupported/Eigen/FFT>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <complex>
#include <random>
#include <set>

#include "emx/rng.hpp"
#include "emx/tensorops.hpp"

namespace emx {
namespace {

constexpr Index kDenseSampleLimit = 1200;  // above this, sampled spectra use the factored path

void assert_symmetric(const Matrix& A, const char* what) {
    if (A.rows() != A.cols()) throw ShapeError(std::string(what) + ": matrix is not square");
    const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw ShapeError(std::string(what) + ": matrix is not symmetric");
}

template <typename Mat>
void fill_gaussian(Mat& M, std::uint64_t seed) {
    auto eng = make_engine(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Index j = 0; j < M.cols(); ++j)
        for (Index i = 0; i < M.rows(); ++i) M(i, j) = static_cast<typename Mat::Scalar>(gauss(eng));
}

Matrix gaussian_matrix(Index rows, Index cols, std::uint64_t seed) {
    Matrix M(rows, cols);
    fill_gaussian(M, seed);
    return M;
}

// Circulant DFT eigenvalues lambda_m = sum_j c_j cos(2 pi m j / d), exact for a symmetric first row.
Vector circulant_eigenvalues(const Vector& c) {
    const Index d = c.size();
    Vector lam(d);
    const double w = 2.0 * M_PI / static_cast<double>(d);
    for (Index m = 0; m < d; ++m) {
        double s = 0.0;
        for (Index j = 0; j < d; ++j) s += c(j) * std::cos(w * static_cast<double>(m) * static_cast<double>(j));
        lam(m) = s;
    }
    return lam;
}

// y = M z with M M' = cov; robust LDLT with one jittered retry.
bool try_psd_factor(const Matrix& cov, Matrix& M) {
    Eigen::LDLT<Matrix> ldlt(cov);
    if (ldlt.info() != Eigen::Success) return false;
    Vector D = ldlt.vectorD();
    const double dmax = std::max(D.maxCoeff(), 0.0);
    if (D.minCoeff() < -1e-8 * std::max(dmax, 1.0)) return false;
    Vector ds = D.cwiseMax(0.0).cwiseSqrt();
    M = Matrix(ldlt.matrixL()) * ds.asDiagonal();
    M = ldlt.transpositionsP().transpose() * M;
    return true;
}

}  // namespace

Matrix make_circulant(Index d, double r) {
    if (d < 1) throw ParameterError("make_circulant: d must be >= 1");
    if (!(r > 0.0 && r < 1.0)) throw ParameterError("make_circulant: decay r must lie in (0, 1)");
    Vector c(d);
    for (Index j = 0; j < d; ++j) c(j) = std::pow(r, static_cast<double>(std::min(j, d - j)));
    Vector lam = circulant_eigenvalues(c);
    if (lam.minCoeff() < -1e-10 * std::max(lam.maxCoeff(), 1.0))
        throw NumericalError("make_circulant: parameterization is not positive semidefinite");
    Matrix S(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) S(i, j) = c((j - i + d) % d);
    return S;
}

Matrix make_toeplitz(Index d, double r) {
    if (d < 1) throw ParameterError("make_toeplitz: d must be >= 1");
    if (!(r >= 0.0 && r < 1.0)) throw ParameterError("make_toeplitz: decay r must lie in [0, 1)");
    Vector pow_r(d);
    pow_r(0) = 1.0;
    for (Index j = 1; j < d; ++j) pow_r(j) = pow_r(j - 1) * r;
    Matrix S(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) S(i, j) = pow_r(std::abs(i - j));
    return S;
}

Matrix make_diag_dominant(Index d, std::uint64_t seed) {
    if (d < 1) throw ParameterError("make_diag_dominant: d must be >= 1");
    Matrix B = gaussian_matrix(d, d, derive_seed(seed, 0xD1A6));
    Matrix M = 0.5 * (B + B.transpose());
    Vector new_diag(d);
    for (Index i = 0; i < d; ++i) new_diag(i) = M.row(i).cwiseAbs().sum() + 1.0;
    M.diagonal() = new_diag;
    return M;
}

Matrix make_kronecker(Index p1, Index p2, std::uint64_t seed) {
    if (p1 < 1 || p2 < 1) throw ParameterError("make_kronecker: factor sizes must be >= 1");
    Matrix G1 = gaussian_matrix(p1, p1, derive_seed(seed, 0x4B01));
    Matrix G2 = gaussian_matrix(p2, p2, derive_seed(seed, 0x4B02));
    Matrix S1 = (G1 * G1.transpose()) / static_cast<double>(p1);
    Matrix S2 = (G2 * G2.transpose()) / static_cast<double>(p2);
    Matrix S = Eigen::kroneckerProduct(S1, S2);
    return 0.5 * (S + S.transpose());
}

Matrix make_general_psd(Index d, std::uint64_t seed) {
    if (d < 1) throw ParameterError("make_general_psd: d must be >= 1");
    Matrix G = gaussian_matrix(d, d, derive_seed(seed, 0x6E4D));
    Matrix S = (G * G.transpose()) / static_cast<double>(d);
    return 0.5 * (S + S.transpose());
}

Matrix SpikedModel::assemble() const {
    const Index d = Xbar.size();
    Vector x = vectorize(Xbar);
    Matrix A = lambda1 * (x * x.transpose());
    if (noise_cov)
        A += *noise_cov;
    else
        A += Matrix::Identity(d, d);
    return 0.5 * (A + A.transpose());
}

SpikedModel make_spiked(double lambda1, Matrix Xbar, std::optional<Matrix> noise) {
    if (!(lambda1 > 0.0)) throw ParameterError("make_spiked: lambda1 must be positive");
    if (std::abs(Xbar.norm() - 1.0) > 1e-8)
        throw ParameterError("make_spiked: eigenmatrix must have unit Frobenius norm");
    if (noise) {
        assert_symmetric(*noise, "make_spiked noise");
        if (noise->rows() != Xbar.size())
            throw ShapeError("make_spiked: noise covariance dimension does not match vec(Xbar)");
    }
    SpikedModel m;
    m.lambda1 = lambda1;
    m.Xbar = std::move(Xbar);
    m.noise_cov = std::move(noise);
    return m;
}

Matrix random_rank_k_eigenmatrix(Shape shape, Index kbar, std::uint64_t seed) {
    shape.checked();
    if (kbar < 1 || kbar > std::min(shape.p1, shape.p2))
        throw ParameterError("random_rank_k_eigenmatrix: kbar out of range [1, min(p1, p2)]");
    for (int attempt = 0; attempt < 32; ++attempt) {
        auto eng = make_engine(derive_seed(seed, 0xEA61, static_cast<std::uint64_t>(attempt)));
        std::uniform_real_distribution<double> unif(-1.0, 1.0);
        Matrix F1(shape.p1, kbar), F2(kbar, shape.p2);
        for (Index j = 0; j < kbar; ++j)
            for (Index i = 0; i < shape.p1; ++i) F1(i, j) = unif(eng);
        for (Index j = 0; j < shape.p2; ++j)
            for (Index i = 0; i < kbar; ++i) F2(i, j) = unif(eng);
        Matrix X = F1 * F2;
        const double nrm = X.norm();
        if (nrm < 1e-12) continue;
        X /= nrm;
        if (numerical_rank(X) == kbar) return X;
    }
    throw NumericalError("random_rank_k_eigenmatrix: could not reach the requested rank after 32 resamples");
}

Matrix sample_gaussian(const Matrix& cov, Index n, std::uint64_t seed) {
    assert_symmetric(cov, "sample_gaussian");
    if (n < 1) throw ParameterError("sample_gaussian: n must be >= 1");
    const Index d = cov.rows();
    Matrix M;
    if (!try_psd_factor(cov, M)) {
        Matrix jittered = cov + 1e-12 * Matrix::Identity(d, d);
        if (!try_psd_factor(jittered, M))
            throw NumericalError("sample_gaussian: covariance is not positive semidefinite (factorization failed after jitter)");
    }
    Matrix Z(n, d);
    for (Index i = 0; i < n; ++i) {
        auto eng = make_engine(derive_seed(seed, 0x5A17, static_cast<std::uint64_t>(i)));
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (Index j = 0; j < d; ++j) Z(i, j) = gauss(eng);
    }
    return Z * M.transpose();
}

Matrix sample_spiked(double lambda1, const Vector& xbar, Index n, std::uint64_t seed) {
    if (!(lambda1 > 0.0)) throw ParameterError("sample_spiked: lambda1 must be positive");
    if (std::abs(xbar.norm() - 1.0) > 1e-8)
        throw ParameterError("sample_spiked: direction must be unit norm");
    if (n < 1) throw ParameterError("sample_spiked: n must be >= 1");
    const Index d = xbar.size();
    const double c = std::sqrt(lambda1 + 1.0) - 1.0;
    Matrix Y(n, d);
    Vector z(d);
    for (Index i = 0; i < n; ++i) {
        auto eng = make_engine(derive_seed(seed, 0x5B00, static_cast<std::uint64_t>(i)));
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (Index j = 0; j < d; ++j) z(j) = gauss(eng);
        Y.row(i) = (z + c * xbar.dot(z) * xbar).transpose();
    }
    return Y;
}

Matrix empirical_cov(const Matrix& samples) {
    if (samples.rows() < 1) throw ParameterError("empirical_cov: empty sample set");
    const Index d = samples.cols();
    Matrix A = Matrix::Zero(d, d);
    A.selfadjointView<Eigen::Lower>().rankUpdate(samples.transpose(), 1.0 / static_cast<double>(samples.rows()));
    return A.selfadjointView<Eigen::Lower>();
}

// ---- declarative spec ----

namespace {
const std::set<std::string> kFamilies = {"circulant", "toeplitz", "diag_dominant",
                                         "kronecker", "general_psd", "spiked"};

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const char* where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError(std::string(where) + ": unknown key \"" + it.key() + "\"");
}
}  // namespace

CovarianceSpec CovarianceSpec::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("covariance spec: expected a JSON object");
    reject_unknown_keys(j, {"family", "d", "shape", "params", "seed"}, "covariance spec");
    CovarianceSpec s;
    if (!j.contains("family") || !j.at("family").is_string())
        throw ConfigError("covariance spec: \"family\" (string) is required");
    s.family = j.at("family").get<std::string>();
    if (!kFamilies.count(s.family)) throw ConfigError("covariance spec: unknown family \"" + s.family + "\"");
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();

    if (j.contains("shape")) {
        const auto& sh = j.at("shape");
        if (!sh.is_array() || sh.size() != 2)
            throw ConfigError("covariance spec: \"shape\" must be [p1, p2]");
        s.shape = Shape{sh.at(0).get<Index>(), sh.at(1).get<Index>()};
    }
    if (j.contains("d")) s.d = j.at("d").get<Index>();

    nlohmann::json params = j.value("params", nlohmann::json::object());
    if (!params.is_object()) throw ConfigError("covariance spec: \"params\" must be an object");
    if (s.family == "circulant" || s.family == "toeplitz") {
        reject_unknown_keys(params, {"r"}, "covariance params");
        s.r = params.value("r", s.family == "toeplitz" ? 0.9 : 0.5);
    } else if (s.family == "spiked") {
        reject_unknown_keys(params, {"lambda1", "kbar"}, "covariance params");
        if (!params.contains("lambda1"))
            throw ConfigError("covariance params: spiked family requires \"lambda1\"");
        s.lambda1 = params.at("lambda1").get<double>();
        s.kbar = params.value("kbar", Index{1});
    } else {
        reject_unknown_keys(params, {}, "covariance params");
    }

    if (s.family == "kronecker") {
        if (s.shape.p1 < 1 || s.shape.p2 < 1)
            throw ConfigError("covariance spec: kronecker family requires \"shape\": [p1, p2]");
        if (s.d == 0) s.d = s.shape.d();
        if (s.d != s.shape.d()) throw ConfigError("covariance spec: d does not equal p1 * p2");
    } else {
        if (s.d < 1) throw ConfigError("covariance spec: \"d\" (positive integer) is required");
        if (s.shape.p1 >= 1 && s.shape.p2 >= 1) {
            if (s.shape.d() != s.d) throw ConfigError("covariance spec: shape is inconsistent with d");
        } else if (s.family == "spiked") {
            s.shape = Shape::square_of(s.d);
        }
    }
    s.validate();
    return s;
}

nlohmann::json CovarianceSpec::to_json() const {
    nlohmann::json j;
    j["family"] = family;
    j["d"] = d;
    j["seed"] = seed;
    nlohmann::json params = nlohmann::json::object();
    if (family == "circulant" || family == "toeplitz") params["r"] = r;
    if (family == "spiked") {
        params["lambda1"] = lambda1;
        params["kbar"] = kbar;
    }
    j["params"] = params;
    if (family == "kronecker" || family == "spiked") j["shape"] = {shape.p1, shape.p2};
    return j;
}

void CovarianceSpec::validate() const {
    if (!kFamilies.count(family)) throw ConfigError("covariance spec: unknown family \"" + family + "\"");
    if (d < 1) throw ConfigError("covariance spec: d must be >= 1");
    if (family == "circulant" && !(r > 0.0 && r < 1.0))
        throw ConfigError("covariance spec: circulant decay r must lie in (0, 1)");
    if (family == "toeplitz" && !(r >= 0.0 && r < 1.0))
        throw ConfigError("covariance spec: toeplitz decay r must lie in [0, 1)");
    if (family == "kronecker" && (shape.p1 < 1 || shape.p2 < 1 || shape.d() != d))
        throw ConfigError("covariance spec: kronecker shape is invalid");
    if (family == "spiked") {
        if (!(lambda1 > 0.0)) throw ConfigError("covariance spec: spiked lambda1 must be positive");
        if (kbar < 1 || kbar > std::min(shape.p1, shape.p2))
            throw ConfigError("covariance spec: spiked kbar out of range");
    }
}

Matrix build_covariance(const CovarianceSpec& spec) {
    spec.validate();
    if (spec.family == "circulant") return make_circulant(spec.d, spec.r);
    if (spec.family == "toeplitz") return make_toeplitz(spec.d, spec.r);
    if (spec.family == "diag_dominant") return make_diag_dominant(spec.d, spec.seed);
    if (spec.family == "kronecker") return make_kronecker(spec.shape.p1, spec.shape.p2, spec.seed);
    if (spec.family == "general_psd") return make_general_psd(spec.d, spec.seed);
    // spiked
    Matrix Xbar = random_rank_k_eigenmatrix(spec.shape, spec.kbar, derive_seed(spec.seed, 0xBA20));
    return make_spiked(spec.lambda1, std::move(Xbar)).assemble();
}

// ---- factored square roots ----

CovSqrtOp toeplitz_sqrt_op(Index d, double r) {
    if (d < 1) throw ParameterError("toeplitz_sqrt_op: d must be >= 1");
    if (!(r >= 0.0 && r < 1.0)) throw ParameterError("toeplitz_sqrt_op: decay r must lie in [0, 1)");
    const double c = std::sqrt(1.0 - r * r);
    CovSqrtOp op;
    op.d = d;
    // Analytic Cholesky of the AR(1) covariance: L(j,0) = r^j, L(j,i) = c r^(j-i) for i >= 1.
    op.apply_L = [d, r, c](Vector& w) {
        double t = w(0), u = 0.0;
        for (Index j = 1; j < d; ++j) {
            u = r * u + w(j);
            t *= r;
            w(j) = t + c * u;
        }
    };
    op.apply_Lt = [d, r, c](Vector& y) {
        for (Index i = d - 2; i >= 0; --i) y(i) += r * y(i + 1);
        for (Index i = 1; i < d; ++i) y(i) *= c;
    };
    return op;
}

CovSqrtOp dense_sqrt_op(std::shared_ptr<const Eigen::MatrixXf> L) {
    if (!L || L->rows() != L->cols()) throw ShapeError("dense_sqrt_op: factor must be square");
    CovSqrtOp op;
    op.d = L->rows();
    op.apply_L = [L](Vector& x) {
        Eigen::VectorXf y = (*L) * x.cast<float>();
        x = y.cast<double>();
    };
    op.apply_Lt = [L](Vector& x) {
        Eigen::VectorXf y = L->transpose() * x.cast<float>();
        x = y.cast<double>();
    };
    return op;
}

CovSqrtOp spiked_sqrt_op(double lambda1, std::shared_ptr<const Vector> xbar) {
    if (!xbar || !(lambda1 > 0.0)) throw ParameterError("spiked_sqrt_op: invalid parameters");
    const double c = std::sqrt(lambda1 + 1.0) - 1.0;
    CovSqrtOp op;
    op.d = xbar->size();
    auto apply = [c, xbar](Vector& x) { x += c * xbar->dot(x) * (*xbar); };
    op.apply_L = apply;
    op.apply_Lt = apply;  // symmetric square root
    return op;
}

CovSqrtOp kronecker_sqrt_op(std::shared_ptr<const Matrix> L1, std::shared_ptr<const Matrix> L2) {
    if (!L1 || !L2) throw ParameterError("kronecker_sqrt_op: null factor");
    const Index p1 = L1->rows(), p2 = L2->rows();
    CovSqrtOp op;
    op.d = p1 * p2;
    // (L1 (x) L2) x = vec(L2 mat(x) L1') with mat of shape (p2, p1).
    op.apply_L = [L1, L2, p1, p2](Vector& x) {
        Eigen::Map<const Matrix> X(x.data(), p2, p1);
        Matrix Y = (*L2) * X * L1->transpose();
        x = Eigen::Map<Vector>(Y.data(), p1 * p2);
    };
    op.apply_Lt = [L1, L2, p1, p2](Vector& x) {
        Eigen::Map<const Matrix> X(x.data(), p2, p1);
        Matrix Y = L2->transpose() * X * (*L1);
        x = Eigen::Map<Vector>(Y.data(), p1 * p2);
    };
    return op;
}

namespace {
// Symmetric circulant square root applied by FFT.
CovSqrtOp circulant_sqrt_op(Index d, double r) {
    Vector c(d);
    for (Index j = 0; j < d; ++j) c(j) = std::pow(r, static_cast<double>(std::min(j, d - j)));
    Vector lam = circulant_eigenvalues(c);
    if (lam.minCoeff() < -1e-10 * std::max(lam.maxCoeff(), 1.0))
        throw NumericalError("circulant square root: parameterization is not positive semidefinite");
    auto s = std::make_shared<Eigen::VectorXcd>(lam.cwiseMax(0.0).cwiseSqrt().cast<std::complex<double>>());
    CovSqrtOp op;
    op.d = d;
    auto apply = [s, d](Vector& x) {
        Eigen::FFT<double> fft;
        Eigen::VectorXcd freq;
        fft.fwd(freq, x);
        freq.array() *= s->array();
        fft.inv(x, freq);
    };
    op.apply_L = apply;
    op.apply_Lt = apply;
    return op;
}
}  // namespace

SampledCovOp::SampledCovOp(CovSqrtOp sqrt_op, Index n, std::uint64_t seed)
    : sqrt_(std::move(sqrt_op)), n_(n) {
    const Index d = sqrt_.d;
    if (n < d)
        throw ParameterError("SampledCovOp: the Bartlett factorization requires n >= d");
    T_ = std::make_shared<Eigen::MatrixXf>(Eigen::MatrixXf::Zero(d, d));
    for (Index i = 0; i < d; ++i) {
        auto eng = make_engine(derive_seed(seed, 0x7749, static_cast<std::uint64_t>(i)));
        std::chi_squared_distribution<double> chi2(static_cast<double>(n - i));
        (*T_)(i, i) = static_cast<float>(std::sqrt(chi2(eng)));
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (Index j = 0; j < i; ++j) (*T_)(i, j) = static_cast<float>(gauss(eng));
    }
}

LinOp SampledCovOp::as_linop() const {
    auto sqrt = sqrt_;
    auto T = T_;
    const double n = static_cast<double>(n_);
    return LinOp::callable(sqrt_.d, [sqrt, T, n](const Vector& x, Vector& out) {
        Vector y = x;
        sqrt.apply_Lt(y);
        Eigen::VectorXf z = y.cast<float>();
        Eigen::VectorXf w = T->triangularView<Eigen::Lower>().transpose() * z;
        Eigen::VectorXf u = T->triangularView<Eigen::Lower>() * w;
        y = u.cast<double>();
        sqrt.apply_L(y);
        out = y / n;
    });
}

namespace {
CovSqrtOp family_sqrt_op(const CovarianceSpec& spec) {
    if (spec.family == "toeplitz") return toeplitz_sqrt_op(spec.d, spec.r);
    if (spec.family == "circulant") return circulant_sqrt_op(spec.d, spec.r);
    if (spec.family == "kronecker") {
        Matrix G1 = gaussian_matrix(spec.shape.p1, spec.shape.p1, derive_seed(spec.seed, 0x4B01));
        Matrix G2 = gaussian_matrix(spec.shape.p2, spec.shape.p2, derive_seed(spec.seed, 0x4B02));
        Matrix S1 = (G1 * G1.transpose()) / static_cast<double>(spec.shape.p1);
        Matrix S2 = (G2 * G2.transpose()) / static_cast<double>(spec.shape.p2);
        Eigen::LLT<Matrix> l1(S1), l2(S2);
        if (l1.info() != Eigen::Success || l2.info() != Eigen::Success)
            throw NumericalError("kronecker square root: factor Cholesky failed");
        return kronecker_sqrt_op(std::make_shared<Matrix>(l1.matrixL()),
                                 std::make_shared<Matrix>(l2.matrixL()));
    }
    if (spec.family == "general_psd") {
        auto L = std::make_shared<Eigen::MatrixXf>(spec.d, spec.d);
        fill_gaussian(*L, derive_seed(spec.seed, 0x6E4D));
        *L /= std::sqrt(static_cast<float>(spec.d));
        return dense_sqrt_op(L);
    }
    if (spec.family == "spiked") {
        Matrix Xbar = random_rank_k_eigenmatrix(spec.shape, spec.kbar, derive_seed(spec.seed, 0xBA20));
        return spiked_sqrt_op(spec.lambda1, std::make_shared<Vector>(vectorize(Xbar)));
    }
    throw ParameterError("family \"" + spec.family + "\" has no factored square root; use d <= " +
                         std::to_string(kDenseSampleLimit));
}

EigPair top_pair_dense(const Matrix& A) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(A);
    if (eig.info() != Eigen::Success) throw NumericalError("dense eigendecomposition failed");
    const Index last = A.rows() - 1;
    EigPair p;
    p.value = eig.eigenvalues()(last);
    p.vector = eig.eigenvectors().col(last);
    Index imax = 0;
    p.vector.cwiseAbs().maxCoeff(&imax);
    if (p.vector(imax) < 0) p.vector = -p.vector;
    return p;
}
}  // namespace

EigPair sampled_top_eigenpair(const CovarianceSpec& spec, Index n, std::uint64_t seed) {
    spec.validate();
    if (n < 1) throw ParameterError("sampled_top_eigenpair: n must be >= 1");
    if (spec.d <= kDenseSampleLimit) {
        Matrix S = sample_gaussian(build_covariance(spec), n, derive_seed(seed, 0x5E01));
        return top_pair_dense(empirical_cov(S));
    }
    SampledCovOp op(family_sqrt_op(spec), n, derive_seed(seed, 0x5E02));
    LanczosOptions lo;
    lo.tol = 1e-5;  // the operator core is float32; residuals below ~1e-6 * ||A|| are unreachable
    lo.max_steps = std::min<Index>(spec.d, 500);
    lo.want_algebraic_max = true;
    lo.seed = derive_seed(seed, 0x5E03);
    EigPair p = lanczos_extremal(op.as_linop(), lo);
    Index imax = 0;
    p.vector.cwiseAbs().maxCoeff(&imax);
    if (p.vector(imax) < 0) p.vector = -p.vector;
    return p;
}

EigPair population_top_eigenpair(const CovarianceSpec& spec) {
    spec.validate();
    if (spec.family == "kronecker") {
        Matrix G1 = gaussian_matrix(spec.shape.p1, spec.shape.p1, derive_seed(spec.seed, 0x4B01));
        Matrix G2 = gaussian_matrix(spec.shape.p2, spec.shape.p2, derive_seed(spec.seed, 0x4B02));
        EigPair e1 = top_pair_dense((G1 * G1.transpose()) / static_cast<double>(spec.shape.p1));
        EigPair e2 = top_pair_dense((G2 * G2.transpose()) / static_cast<double>(spec.shape.p2));
        EigPair p;
        p.value = e1.value * e2.value;
        Matrix outer = e2.vector * e1.vector.transpose();  // shape (p2, p1)
        p.vector = vectorize(outer);
        return p;
    }
    if (spec.family == "spiked") {
        Matrix Xbar = random_rank_k_eigenmatrix(spec.shape, spec.kbar, derive_seed(spec.seed, 0xBA20));
        EigPair p;
        p.value = spec.lambda1 + 1.0;
        p.vector = vectorize(Xbar);
        return p;
    }
    if (spec.family == "circulant") {
        // Positive entries: the Perron eigenvector is the constant vector, eigenvalue = row sum.
        Vector c(spec.d);
        for (Index j = 0; j < spec.d; ++j)
            c(j) = std::pow(spec.r, static_cast<double>(std::min(j, spec.d - j)));
        EigPair p;
        p.value = c.sum();
        p.vector = Vector::Constant(spec.d, 1.0 / std::sqrt(static_cast<double>(spec.d)));
        return p;
    }
    if (spec.family == "toeplitz" && spec.d > kDenseSampleLimit) {
        CovSqrtOp sq = toeplitz_sqrt_op(spec.d, spec.r);
        LinOp A = LinOp::callable(spec.d, [sq](const Vector& x, Vector& out) {
            out = x;
            sq.apply_Lt(out);
            sq.apply_L(out);
        });
        LanczosOptions lo;
        lo.tol = 1e-10;
        lo.max_steps = std::min<Index>(spec.d, 800);
        lo.want_algebraic_max = true;
        EigPair p = lanczos_extremal(A, lo);
        Index imax = 0;
        p.vector.cwiseAbs().maxCoeff(&imax);
        if (p.vector(imax) < 0) p.vector = -p.vector;
        return p;
    }
    if (spec.family == "general_psd" && spec.d > 4096) {
        // G G' x / d via two float32 GEMVs; the draw sequence matches the dense builder.
        auto G = std::make_shared<Eigen::MatrixXf>(spec.d, spec.d);
        fill_gaussian(*G, derive_seed(spec.seed, 0x6E4D));
        const float inv_d = 1.0f / static_cast<float>(spec.d);
        LinOp A = LinOp::callable(spec.d, [G, inv_d](const Vector& x, Vector& out) {
            Eigen::VectorXf xf = x.cast<float>();
            Eigen::VectorXf y = (*G) * (G->transpose() * xf) * inv_d;
            out = y.cast<double>();
        });
        LanczosOptions lo;
        lo.tol = 1e-5;  // float32 core; see sampled_top_eigenpair
        lo.max_steps = std::min<Index>(spec.d, 500);
        lo.want_algebraic_max = true;
        lo.seed = derive_seed(spec.seed, 0x6E4E);
        EigPair p = lanczos_extremal(A, lo);
        Index imax = 0;
        p.vector.cwiseAbs().maxCoeff(&imax);
        if (p.vector(imax) < 0) p.vector = -p.vector;
        return p;
    }
    if (spec.d > 4096)
        throw ParameterError("population_top_eigenpair: family \"" + spec.family +
                             "\" requires a dense eigendecomposition; d is too large");
    return top_pair_dense(build_covariance(spec));
}

}  // namespace emx
