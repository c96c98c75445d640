#include "poisonlab/linalg.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>
#include <string>

namespace poisonlab {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::InvalidShape: return "InvalidShape";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::NumericallySingular: return "NumericallySingular";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::ZeroDiagonal: return "ZeroDiagonal";
    case ErrorCode::ZeroPivot: return "ZeroPivot";
    case ErrorCode::CgBreakdown: return "CgBreakdown";
    case ErrorCode::DegenerateSpectrum: return "DegenerateSpectrum";
    case ErrorCode::InnerSolveFailure: return "InnerSolveFailure";
    case ErrorCode::PreconditionFailed: return "PreconditionFailed";
    case ErrorCode::InvalidAlpha: return "InvalidAlpha";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::DefectiveMatrix: return "DefectiveMatrix";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

namespace {

void require_finite(std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::NonFinite, "matrix/vector entries must be finite");
        }
    }
}

void require_same_size(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw Error(ErrorCode::InvalidShape,
                    std::string(what) + ": size mismatch " + std::to_string(a) + " vs " +
                        std::to_string(b));
    }
}

void require_square(const Mat& a, const char* what) {
    if (!a.is_square()) {
        throw Error(ErrorCode::InvalidShape, std::string(what) + " requires a square matrix");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Vect

Vect::Vect(std::size_t n, double fill) : data_(n, fill) {
    if (n == 0) throw Error(ErrorCode::InvalidShape, "vector length must be >= 1");
    if (!std::isfinite(fill)) throw Error(ErrorCode::NonFinite, "fill value must be finite");
}

Vect::Vect(std::vector<double> data) : data_(std::move(data)) {
    if (data_.empty()) throw Error(ErrorCode::InvalidShape, "vector length must be >= 1");
    require_finite(data_);
}

Vect::Vect(std::initializer_list<double> values) : Vect(std::vector<double>(values)) {}

bool Vect::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Vect& Vect::operator+=(const Vect& other) {
    require_same_size(size(), other.size(), "Vect +=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Vect& Vect::operator-=(const Vect& other) {
    require_same_size(size(), other.size(), "Vect -=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Vect& Vect::operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
}

// ---------------------------------------------------------------------------
// Mat

Mat::Mat(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (rows == 0 || cols == 0) throw Error(ErrorCode::InvalidShape, "matrix dimensions must be >= 1");
    if (!std::isfinite(fill)) throw Error(ErrorCode::NonFinite, "fill value must be finite");
}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> row_major)
    : rows_(rows), cols_(cols), data_(std::move(row_major)) {
    if (rows == 0 || cols == 0) throw Error(ErrorCode::InvalidShape, "matrix dimensions must be >= 1");
    if (data_.size() != rows * cols) {
        throw Error(ErrorCode::InvalidShape, "data length does not match rows*cols");
    }
    require_finite(data_);
}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    if (rows_ == 0 || cols_ == 0) throw Error(ErrorCode::InvalidShape, "matrix dimensions must be >= 1");
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw Error(ErrorCode::InvalidShape, "ragged matrix literal");
        data_.insert(data_.end(), r.begin(), r.end());
    }
    require_finite(data_);
}

Mat Mat::identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Mat Mat::diag(const Vect& d) {
    Mat m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
}

Vect Mat::col(std::size_t j) const {
    Vect v(rows_);
    for (std::size_t i = 0; i < rows_; ++i) v[i] = (*this)(i, j);
    return v;
}

void Mat::set_col(std::size_t j, const Vect& v) {
    require_same_size(rows_, v.size(), "Mat::set_col");
    for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = v[i];
}

Mat Mat::transpose() const {
    Mat t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

bool Mat::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Mat& Mat::operator+=(const Mat& other) {
    if (rows_ != other.rows_ || cols_ != other.cols_) {
        throw Error(ErrorCode::InvalidShape, "Mat +=: shape mismatch");
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Mat& Mat::operator-=(const Mat& other) {
    if (rows_ != other.rows_ || cols_ != other.cols_) {
        throw Error(ErrorCode::InvalidShape, "Mat -=: shape mismatch");
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Mat& Mat::operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
}

Vect operator+(Vect a, const Vect& b) { return a += b; }
Vect operator-(Vect a, const Vect& b) { return a -= b; }
Vect operator*(double s, Vect v) { return v *= s; }
Mat operator+(Mat a, const Mat& b) { return a += b; }
Mat operator-(Mat a, const Mat& b) { return a -= b; }
Mat operator*(double s, Mat m) { return m *= s; }

Mat operator*(const Mat& a, const Mat& b) {
    require_same_size(a.cols(), b.rows(), "matmul");
    Mat c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

Vect operator*(const Mat& a, const Vect& x) {
    require_same_size(a.cols(), x.size(), "matvec");
    Vect y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

Vect transpose_times(const Mat& a, const Vect& x) {
    require_same_size(a.rows(), x.size(), "transpose_times");
    Vect y(a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double xi = x[i];
        for (std::size_t j = 0; j < a.cols(); ++j) y[j] += a(i, j) * xi;
    }
    return y;
}

Mat outer(const Vect& u, const Vect& v) {
    Mat m(u.size(), v.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) m(i, j) = u[i] * v[j];
    return m;
}

double dot(const Vect& a, const Vect& b) {
    require_same_size(a.size(), b.size(), "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const Vect& v) {
    // scaled accumulation avoids overflow for diverging iterates
    double scale = 0.0;
    for (double x : v) scale = std::max(scale, std::abs(x));
    if (scale == 0.0 || !std::isfinite(scale)) return scale;
    double s = 0.0;
    for (double x : v) {
        const double r = x / scale;
        s += r * r;
    }
    return scale * std::sqrt(s);
}

double norm_inf(const Mat& a) {
    double best = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (double v : a.row(i)) s += std::abs(v);
        best = std::max(best, s);
    }
    return best;
}

double max_abs(const Mat& a) {
    double best = 0.0;
    for (double v : a.data()) best = std::max(best, std::abs(v));
    return best;
}

bool is_symmetric(const Mat& a, double rel_tol) {
    if (!a.is_square()) return false;
    const double tol = rel_tol * max_abs(a);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j)
            if (std::abs(a(i, j) - a(j, i)) > tol) return false;
    return true;
}

// ---------------------------------------------------------------------------
// LU

LuDecomp::LuDecomp(const Mat& a) : lu_(a), perm_(a.rows()) {
    require_square(a, "LU");
    const std::size_t n = a.rows();
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    const double threshold = kSingularThreshold * norm_inf(a);
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double best = std::abs(lu_(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            if (std::abs(lu_(i, k)) > best) {
                best = std::abs(lu_(i, k));
                piv = i;
            }
        }
        if (best <= threshold || best == 0.0) {
            throw Error(ErrorCode::SingularMatrix,
                        "pivot " + std::to_string(best) + " at column " + std::to_string(k));
        }
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(piv, j));
            std::swap(perm_[k], perm_[piv]);
        }
        const double inv = 1.0 / lu_(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double m = lu_(i, k) * inv;
            lu_(i, k) = m;
            if (m == 0.0) continue;
            for (std::size_t j = k + 1; j < n; ++j) lu_(i, j) -= m * lu_(k, j);
        }
    }
}

Vect LuDecomp::solve(const Vect& b) const {
    const std::size_t n = size();
    require_same_size(n, b.size(), "LU solve");
    Vect x(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[perm_[i]];
        for (std::size_t j = 0; j < i; ++j) s -= lu_(i, j) * x[j];
        x[i] = s;
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = x[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= lu_(i, j) * x[j];
        x[i] = s / lu_(i, i);
    }
    return x;
}

Vect LuDecomp::solve_transposed(const Vect& b) const {
    const std::size_t n = size();
    require_same_size(n, b.size(), "LU solve_transposed");
    Vect z(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t j = 0; j < i; ++j) s -= lu_(j, i) * z[j];
        z[i] = s / lu_(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = z[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= lu_(j, i) * z[j];
        z[i] = s;
    }
    Vect x(n);
    for (std::size_t i = 0; i < n; ++i) x[perm_[i]] = z[i];
    return x;
}

Vect lu_solve(const Mat& a, const Vect& b) { return LuDecomp(a).solve(b); }

Vect cholesky_solve(const Mat& spd, const Vect& b) {
    require_square(spd, "Cholesky");
    const std::size_t n = spd.rows();
    require_same_size(n, b.size(), "Cholesky solve");
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(spd(i, i)));
    const double threshold = kSingularThreshold * max_diag;

    Mat l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = spd(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > threshold)) {
            throw Error(ErrorCode::NumericallySingular,
                        "Cholesky pivot " + std::to_string(d) + " at column " + std::to_string(j));
        }
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = spd(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    Vect z(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * z[k];
        z[i] = s / l(i, i);
    }
    Vect x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = z[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
        x[i] = s / l(i, i);
    }
    return x;
}

// ---------------------------------------------------------------------------
// SVD

namespace {

constexpr int kMaxJacobiSweeps = 80;

// One-sided Jacobi on a tall matrix (rows >= cols). Columns are held
// contiguously so the rotation inner loops stream through memory.
Svd svd_tall(const Mat& a) {
    const std::size_t n = a.rows();
    const std::size_t d = a.cols();
    std::vector<std::vector<double>> w(d, std::vector<double>(n));
    std::vector<std::vector<double>> v(d, std::vector<double>(d, 0.0));
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < n; ++i) w[j][i] = a(i, j);
        v[j][j] = 1.0;
    }

    const double tol = DBL_EPSILON * static_cast<double>(n);
    bool converged = false;
    for (int sweep = 0; sweep < kMaxJacobiSweeps && !converged; ++sweep) {
        converged = true;
        for (std::size_t p = 0; p + 1 < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                const auto& wp = w[p];
                const auto& wq = w[q];
                for (std::size_t i = 0; i < n; ++i) {
                    alpha += wp[i] * wp[i];
                    beta += wq[i] * wq[i];
                    gamma += wp[i] * wq[i];
                }
                if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha) * std::sqrt(beta)) continue;
                converged = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < n; ++i) {
                    const double xp = w[p][i];
                    const double xq = w[q][i];
                    w[p][i] = c * xp - s * xq;
                    w[q][i] = s * xp + c * xq;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    const double xp = v[p][i];
                    const double xq = v[q][i];
                    v[p][i] = c * xp - s * xq;
                    v[q][i] = s * xp + c * xq;
                }
            }
        }
    }
    if (!converged) throw Error(ErrorCode::NoConvergence, "one-sided Jacobi SVD exceeded sweep cap");

    std::vector<double> norms(d);
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (double x : w[j]) s += x * x;
        norms[j] = std::sqrt(s);
    }
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    Svd out{Mat(n, d), Vect(d), Mat(d, d)};
    const double smax = norms[order[0]];
    std::vector<bool> filled(d, false);
    for (std::size_t k = 0; k < d; ++k) {
        const std::size_t j = order[k];
        out.sigma[k] = norms[j];
        for (std::size_t i = 0; i < d; ++i) out.v(i, k) = v[j][i];
        if (norms[j] > 0.0 && norms[j] > smax * 1e-200) {
            for (std::size_t i = 0; i < n; ++i) out.u(i, k) = w[j][i] / norms[j];
            filled[k] = true;
        }
    }
    // Complete left vectors for exactly null directions with Gram-Schmidt on
    // the standard basis (two passes).
    std::size_t candidate = 0;
    for (std::size_t k = 0; k < d; ++k) {
        if (filled[k]) continue;
        while (candidate < n) {
            std::vector<double> e(n, 0.0);
            e[candidate++] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t m = 0; m < d; ++m) {
                    if (!filled[m]) continue;
                    double proj = 0.0;
                    for (std::size_t i = 0; i < n; ++i) proj += out.u(i, m) * e[i];
                    for (std::size_t i = 0; i < n; ++i) e[i] -= proj * out.u(i, m);
                }
            }
            double s = 0.0;
            for (double x : e) s += x * x;
            s = std::sqrt(s);
            if (s > 0.5) {
                for (std::size_t i = 0; i < n; ++i) out.u(i, k) = e[i] / s;
                filled[k] = true;
                break;
            }
        }
    }
    return out;
}

}  // namespace

Mat Svd::reconstruct() const {
    Mat us = u;
    for (std::size_t i = 0; i < us.rows(); ++i)
        for (std::size_t k = 0; k < us.cols(); ++k) us(i, k) *= sigma[k];
    return us * v.transpose();
}

Svd svd(const Mat& a) {
    if (!a.all_finite()) throw Error(ErrorCode::NonFinite, "svd input must be finite");
    if (a.rows() >= a.cols()) return svd_tall(a);
    Svd t = svd_tall(a.transpose());
    return Svd{std::move(t.v), std::move(t.sigma), std::move(t.u)};
}

Vect singular_values(const Mat& a) { return svd(a).sigma; }

Vect lstsq(const Mat& a, const Vect& b) {
    require_same_size(a.rows(), b.size(), "lstsq");
    const Svd s = svd(a);
    const double cutoff = kSingularThreshold * s.sigma[0];
    Vect coeff = transpose_times(s.u, b);
    for (std::size_t k = 0; k < coeff.size(); ++k) {
        coeff[k] = (s.sigma[k] > cutoff && s.sigma[k] > 0.0) ? coeff[k] / s.sigma[k] : 0.0;
    }
    return s.v * coeff;
}

double fnorm(const Mat& a) {
    double scale = max_abs(a);
    if (scale == 0.0) return 0.0;
    double s = 0.0;
    for (double v : a.data()) {
        const double r = v / scale;
        s += r * r;
    }
    return scale * std::sqrt(s);
}

double opnorm2(const Mat& a) { return singular_values(a)[0]; }

double inv_norm2(const Mat& a) {
    require_square(a, "inv_norm2");
    const Vect s = singular_values(a);
    const double smin = s[s.size() - 1];
    if (!(smin > kSingularThreshold * s[0])) {
        throw Error(ErrorCode::NumericallySingular, "inv_norm2 of a numerically singular matrix");
    }
    return 1.0 / smin;
}

double cond2(const Mat& a) {
    const Vect s = singular_values(a);
    const double smin = s[s.size() - 1];
    if (!(smin > kSingularThreshold * s[0])) {
        throw Error(ErrorCode::NumericallySingular, "condition number of a numerically singular matrix");
    }
    return s[0] / smin;
}

// ---------------------------------------------------------------------------
// Symmetric eigenproblem (cyclic Jacobi)

SymEigen eig_symmetric(const Mat& input) {
    require_square(input, "eig_symmetric");
    const std::size_t n = input.rows();
    Mat a = input;
    // symmetrize so the rotations act on an exactly symmetric matrix
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (a(i, j) + a(j, i));
    Mat v = Mat::identity(n);
    const double floor = 1e-300 + 1e-18 * fnorm(a);

    bool converged = false;
    for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
        converged = true;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= floor ||
                    std::abs(apq) <= DBL_EPSILON * std::sqrt(std::abs(a(p, p) * a(q, q)))) {
                    continue;
                }
                converged = false;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    if (!converged) throw Error(ErrorCode::NoConvergence, "symmetric Jacobi exceeded sweep cap");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
    SymEigen out{Vect(n), Mat(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        out.values[k] = a(j, j);
        // sign convention: largest-magnitude component positive
        std::size_t big = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (std::abs(v(i, j)) > std::abs(v(big, j))) big = i;
        const double sign = v(big, j) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = sign * v(i, j);
    }
    return out;
}

// ---------------------------------------------------------------------------
// General eigenproblem

namespace {

void balance(Mat& a) {
    constexpr double radix = 2.0;
    constexpr double sqrdx = radix * radix;
    const std::size_t n = a.rows();
    bool done = false;
    while (!done) {
        done = true;
        for (std::size_t i = 0; i < n; ++i) {
            double r = 0.0, c = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                c += std::abs(a(j, i));
                r += std::abs(a(i, j));
            }
            if (c == 0.0 || r == 0.0) continue;
            double g = r / radix;
            double f = 1.0;
            const double s = c + r;
            while (c < g) {
                f *= radix;
                c *= sqrdx;
            }
            g = r * radix;
            while (c > g) {
                f /= radix;
                c /= sqrdx;
            }
            if ((c + r) / f < 0.95 * s) {
                done = false;
                g = 1.0 / f;
                for (std::size_t j = 0; j < n; ++j) a(i, j) *= g;
                for (std::size_t j = 0; j < n; ++j) a(j, i) *= f;
            }
        }
    }
}

void reduce_to_hessenberg(Mat& h) {
    const std::size_t n = h.rows();
    if (n < 3) return;
    std::vector<double> v(n);
    for (std::size_t k = 0; k + 2 < n; ++k) {
        double scale = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) scale = std::max(scale, std::abs(h(i, k)));
        if (scale == 0.0) continue;
        double norm = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) {
            v[i] = h(i, k) / scale;
            norm += v[i] * v[i];
        }
        norm = std::sqrt(norm);
        const double alpha = (v[k + 1] > 0.0 ? -norm : norm);
        v[k + 1] -= alpha;
        double vnorm = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) vnorm += v[i] * v[i];
        vnorm = std::sqrt(vnorm);
        if (vnorm == 0.0) continue;
        for (std::size_t i = k + 1; i < n; ++i) v[i] /= vnorm;
        // H <- (I - 2vvᵀ) H
        for (std::size_t j = k; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k + 1; i < n; ++i) s += v[i] * h(i, j);
            for (std::size_t i = k + 1; i < n; ++i) h(i, j) -= 2.0 * v[i] * s;
        }
        // H <- H (I - 2vvᵀ)
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = k + 1; j < n; ++j) s += h(i, j) * v[j];
            for (std::size_t j = k + 1; j < n; ++j) h(i, j) -= 2.0 * s * v[j];
        }
        h(k + 1, k) = alpha * scale;
        for (std::size_t i = k + 2; i < n; ++i) h(i, k) = 0.0;
    }
}

double sign_of(double a, double b) { return b >= 0.0 ? std::abs(a) : -std::abs(a); }

// Francis double-shift QR on an upper Hessenberg matrix (EISPACK hqr layout).
std::vector<Complex> hessenberg_qr_eigenvalues(Mat a) {
    const int n = static_cast<int>(a.rows());
    std::vector<double> wr(n, 0.0), wi(n, 0.0);
    double anorm = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(a(i, j));

    int nn = n - 1;
    double t = 0.0;
    while (nn >= 0) {
        int its = 0;
        int l = 0;
        do {
            for (l = nn; l >= 1; --l) {
                double s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
                if (s == 0.0) s = anorm;
                if (std::abs(a(l, l - 1)) + s == s) {
                    a(l, l - 1) = 0.0;
                    break;
                }
            }
            double x = a(nn, nn);
            if (l == nn) {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                --nn;
            } else {
                double y = a(nn - 1, nn - 1);
                double w = a(nn, nn - 1) * a(nn - 1, nn);
                if (l == nn - 1) {
                    const double p = 0.5 * (y - x);
                    const double q = p * p + w;
                    double z = std::sqrt(std::abs(q));
                    x += t;
                    if (q >= 0.0) {
                        z = p + sign_of(z, p);
                        wr[nn - 1] = wr[nn] = x + z;
                        if (z != 0.0) wr[nn] = x - w / z;
                        wi[nn - 1] = wi[nn] = 0.0;
                    } else {
                        wr[nn - 1] = wr[nn] = x + p;
                        wi[nn - 1] = -z;
                        wi[nn] = z;
                    }
                    nn -= 2;
                } else {
                    if (its == 60) {
                        throw Error(ErrorCode::NoConvergence, "Hessenberg QR exceeded iteration cap");
                    }
                    if (its > 0 && its % 10 == 0) {
                        // exceptional shift
                        t += x;
                        for (int i = 0; i <= nn; ++i) a(i, i) -= x;
                        const double s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
                        y = x = 0.75 * s;
                        w = -0.4375 * s * s;
                    }
                    ++its;
                    int m = nn - 2;
                    double p = 0.0, q = 0.0, r = 0.0, z = 0.0;
                    for (; m >= l; --m) {
                        z = a(m, m);
                        r = x - z;
                        double s = y - z;
                        p = (r * s - w) / a(m + 1, m) + a(m, m + 1);
                        q = a(m + 1, m + 1) - z - r - s;
                        r = a(m + 2, m + 1);
                        s = std::abs(p) + std::abs(q) + std::abs(r);
                        p /= s;
                        q /= s;
                        r /= s;
                        if (m == l) break;
                        const double u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
                        const double v = std::abs(p) * (std::abs(a(m - 1, m - 1)) + std::abs(z) +
                                                        std::abs(a(m + 1, m + 1)));
                        if (u + v == v) break;
                    }
                    for (int i = m + 2; i <= nn; ++i) {
                        a(i, i - 2) = 0.0;
                        if (i != m + 2) a(i, i - 3) = 0.0;
                    }
                    for (int k = m; k <= nn - 1; ++k) {
                        if (k != m) {
                            p = a(k, k - 1);
                            q = a(k + 1, k - 1);
                            r = 0.0;
                            if (k != nn - 1) r = a(k + 2, k - 1);
                            x = std::abs(p) + std::abs(q) + std::abs(r);
                            if (x != 0.0) {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        const double s = sign_of(std::sqrt(p * p + q * q + r * r), p);
                        if (s != 0.0) {
                            if (k == m) {
                                if (l != m) a(k, k - 1) = -a(k, k - 1);
                            } else {
                                a(k, k - 1) = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for (int j = k; j <= nn; ++j) {
                                p = a(k, j) + q * a(k + 1, j);
                                if (k != nn - 1) {
                                    p += r * a(k + 2, j);
                                    a(k + 2, j) -= p * z;
                                }
                                a(k + 1, j) -= p * y;
                                a(k, j) -= p * x;
                            }
                            const int mmin = nn < k + 3 ? nn : k + 3;
                            for (int i = l; i <= mmin; ++i) {
                                p = x * a(i, k) + y * a(i, k + 1);
                                if (k != nn - 1) {
                                    p += z * a(i, k + 2);
                                    a(i, k + 2) -= p * r;
                                }
                                a(i, k + 1) -= p * q;
                                a(i, k) -= p;
                            }
                        }
                    }
                }
            }
        } while (l < nn - 1);
    }
    std::vector<Complex> values(n);
    for (int i = 0; i < n; ++i) values[i] = Complex(wr[i], wi[i]);
    return values;
}

using CVec = std::vector<Complex>;

double cnorm(const CVec& v) {
    double s = 0.0;
    for (const Complex& z : v) s += std::norm(z);
    return std::sqrt(s);
}

// Solves (A - mu I) x = b with partial pivoting; pivots below `tiny` are
// replaced by `tiny`, the usual inverse-iteration regularization.
class ShiftedComplexLu {
public:
    ShiftedComplexLu(const Mat& a, Complex mu, double tiny) : n_(a.rows()), lu_(n_ * n_), perm_(n_) {
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) lu_[i * n_ + j] = Complex(a(i, j), 0.0);
        for (std::size_t i = 0; i < n_; ++i) lu_[i * n_ + i] -= mu;
        std::iota(perm_.begin(), perm_.end(), std::size_t{0});
        for (std::size_t k = 0; k < n_; ++k) {
            std::size_t piv = k;
            double best = std::abs(lu_[k * n_ + k]);
            for (std::size_t i = k + 1; i < n_; ++i) {
                const double mag = std::abs(lu_[i * n_ + k]);
                if (mag > best) {
                    best = mag;
                    piv = i;
                }
            }
            if (piv != k) {
                for (std::size_t j = 0; j < n_; ++j) std::swap(lu_[k * n_ + j], lu_[piv * n_ + j]);
                std::swap(perm_[k], perm_[piv]);
            }
            if (std::abs(lu_[k * n_ + k]) < tiny) lu_[k * n_ + k] = Complex(tiny, 0.0);
            const Complex inv = 1.0 / lu_[k * n_ + k];
            for (std::size_t i = k + 1; i < n_; ++i) {
                const Complex m = lu_[i * n_ + k] * inv;
                lu_[i * n_ + k] = m;
                if (m == Complex(0.0, 0.0)) continue;
                for (std::size_t j = k + 1; j < n_; ++j) lu_[i * n_ + j] -= m * lu_[k * n_ + j];
            }
        }
    }

    CVec solve(const CVec& b) const {
        CVec x(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            Complex s = b[perm_[i]];
            for (std::size_t j = 0; j < i; ++j) s -= lu_[i * n_ + j] * x[j];
            x[i] = s;
        }
        for (std::size_t i = n_; i-- > 0;) {
            Complex s = x[i];
            for (std::size_t j = i + 1; j < n_; ++j) s -= lu_[i * n_ + j] * x[j];
            x[i] = s / lu_[i * n_ + i];
        }
        return x;
    }

private:
    std::size_t n_;
    CVec lu_;
    std::vector<std::size_t> perm_;
};

double eigen_residual(const Mat& a, Complex lambda, const CVec& v) {
    const std::size_t n = a.rows();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Complex acc = -lambda * v[i];
        for (std::size_t j = 0; j < n; ++j) acc += a(i, j) * v[j];
        s += std::norm(acc);
    }
    return std::sqrt(s);
}

void normalize_phase(CVec& v) {
    const double nrm = cnorm(v);
    if (nrm == 0.0) return;
    std::size_t big = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[big]) * (1.0 + 1e-12)) big = i;
    const Complex phase = std::abs(v[big]) > 0.0 ? std::conj(v[big]) / std::abs(v[big]) : Complex(1.0);
    for (Complex& z : v) z = z * phase / nrm;
    // pin the pivot component to the real axis exactly
    v[big] = Complex(std::abs(v[big]), 0.0);
}

CVec inverse_iteration(const Mat& a, Complex lambda, double anorm, const std::vector<CVec>& cluster) {
    const std::size_t n = a.rows();
    const double scale = std::max(anorm, DBL_MIN);
    const double tiny = DBL_EPSILON * scale;
    const ShiftedComplexLu lu(a, lambda, tiny);

    CVec b(n);
    for (std::size_t i = 0; i < n; ++i) {
        // deterministic, non-degenerate start vector
        const double frac = std::fmod(0.6180339887498949 * static_cast<double>(i + 1), 1.0);
        b[i] = Complex(1.0 + 0.5 * frac, 0.0);
    }
    auto orthogonalize = [&](CVec& x) {
        for (int pass = 0; pass < 2; ++pass) {
            for (const CVec& u : cluster) {
                Complex proj(0.0, 0.0);
                for (std::size_t i = 0; i < n; ++i) proj += std::conj(u[i]) * x[i];
                for (std::size_t i = 0; i < n; ++i) x[i] -= proj * u[i];
            }
        }
    };
    orthogonalize(b);
    double bn = cnorm(b);
    if (bn == 0.0) {
        b.assign(n, Complex(0.0, 0.0));
        b[cluster.size() % n] = 1.0;
        orthogonalize(b);
        bn = cnorm(b);
    }
    for (Complex& z : b) z /= bn;

    const double target = 1e-10 * scale;
    for (int iter = 0; iter < 8; ++iter) {
        CVec x = lu.solve(b);
        const double xn = cnorm(x);
        if (!(xn > 0.0) || !std::isfinite(xn)) break;
        for (Complex& z : x) z /= xn;
        b = std::move(x);
        if (iter >= 1 && eigen_residual(a, lambda, b) <= target) break;
    }
    normalize_phase(b);
    return b;
}

}  // namespace

std::vector<Complex> EigenDecomp::vector(std::size_t i) const {
    std::vector<Complex> v(vectors.rows());
    for (std::size_t r = 0; r < vectors.rows(); ++r) v[r] = Complex(vectors(r, 2 * i), vectors(r, 2 * i + 1));
    return v;
}

EigenDecomp eig_general(const Mat& a) {
    require_square(a, "eig_general");
    if (!a.all_finite()) throw Error(ErrorCode::NonFinite, "eig_general input must be finite");
    const std::size_t n = a.rows();
    EigenDecomp out{std::vector<Complex>(n), Mat(n, 2 * n)};

    if (is_symmetric(a, 1e-14)) {
        const SymEigen sym = eig_symmetric(a);
        for (std::size_t k = 0; k < n; ++k) {
            out.values[k] = Complex(sym.values[n - 1 - k], 0.0);
            for (std::size_t i = 0; i < n; ++i) out.vectors(i, 2 * k) = sym.vectors(i, n - 1 - k);
        }
        return out;
    }

    Mat h = a;
    balance(h);
    reduce_to_hessenberg(h);
    std::vector<Complex> values = hessenberg_qr_eigenvalues(std::move(h));
    std::stable_sort(values.begin(), values.end(), [](const Complex& x, const Complex& y) {
        if (x.real() != y.real()) return x.real() > y.real();
        return x.imag() > y.imag();
    });

    const double anorm = norm_inf(a);
    const double cluster_tol = 1e-10 * std::max(anorm, 1e-300);
    std::vector<CVec> vecs(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Complex lambda = values[k];
        if (lambda.imag() < 0.0 && k > 0 && values[k - 1] == std::conj(lambda)) {
            vecs[k] = vecs[k - 1];
            for (Complex& z : vecs[k]) z = std::conj(z);
            continue;
        }
        std::vector<CVec> cluster;
        for (std::size_t j = 0; j < k; ++j)
            if (std::abs(values[j] - lambda) <= cluster_tol) cluster.push_back(vecs[j]);
        vecs[k] = inverse_iteration(a, lambda, anorm, cluster);
    }
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = values[k];
        for (std::size_t i = 0; i < n; ++i) {
            out.vectors(i, 2 * k) = vecs[k][i].real();
            out.vectors(i, 2 * k + 1) = vecs[k][i].imag();
        }
    }
    return out;
}

double spectral_radius(const Mat& a) {
    require_square(a, "spectral_radius");
    if (max_abs(a) == 0.0) return 0.0;
    const EigenDecomp e = eig_general(a);
    double rho = 0.0;
    for (const Complex& z : e.values) rho = std::max(rho, std::abs(z));
    return rho;
}

}  // namespace poisonlab
