#pragma once

// Dense real linear algebra for desk-scale problems (n up to a few hundred).
// Everything here is a pure function of its arguments; decompositions use a
// fixed sweep order so results are bit-reproducible for identical inputs.

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "poisonlab/errors.hpp"

namespace poisonlab {

/// Relative cutoff below which pivots and singular values count as zero.
inline constexpr double kSingularThreshold = 1e-13;

class Vect {
public:
    Vect() = default;
    explicit Vect(std::size_t n, double fill = 0.0);
    explicit Vect(std::vector<double> data);
    Vect(std::initializer_list<double> values);

    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> span() noexcept { return data_; }
    std::span<const double> span() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    bool all_finite() const noexcept;

    Vect& operator+=(const Vect& other);
    Vect& operator-=(const Vect& other);
    Vect& operator*=(double s) noexcept;

    friend bool operator==(const Vect&, const Vect&) = default;

private:
    std::vector<double> data_;
};

/// Row-major dense matrix.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0);
    Mat(std::size_t rows, std::size_t cols, std::vector<double> row_major);
    Mat(std::initializer_list<std::initializer_list<double>> rows);

    static Mat identity(std::size_t n);
    static Mat diag(const Vect& d);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool is_square() const noexcept { return rows_ == cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
    Vect col(std::size_t j) const;
    void set_col(std::size_t j, const Vect& v);

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    Mat transpose() const;
    bool all_finite() const noexcept;

    Mat& operator+=(const Mat& other);
    Mat& operator-=(const Mat& other);
    Mat& operator*=(double s) noexcept;

    friend bool operator==(const Mat&, const Mat&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Vect operator+(Vect a, const Vect& b);
Vect operator-(Vect a, const Vect& b);
Vect operator*(double s, Vect v);
Mat operator+(Mat a, const Mat& b);
Mat operator-(Mat a, const Mat& b);
Mat operator*(double s, Mat m);
Mat operator*(const Mat& a, const Mat& b);
Vect operator*(const Mat& a, const Vect& x);

double dot(const Vect& a, const Vect& b);
double norm2(const Vect& v);
/// Aᵀx without forming Aᵀ.
Vect transpose_times(const Mat& a, const Vect& x);
/// Outer product u vᵀ.
Mat outer(const Vect& u, const Vect& v);
/// Largest absolute row sum.
double norm_inf(const Mat& a);
double max_abs(const Mat& a);
bool is_symmetric(const Mat& a, double rel_tol);

// ---------------------------------------------------------------------------
// Factorizations

/// LU with partial pivoting, P·A = L·U stored compactly.
class LuDecomp {
public:
    /// Throws SingularMatrix if a pivot falls below kSingularThreshold·‖a‖∞.
    explicit LuDecomp(const Mat& a);

    Vect solve(const Vect& b) const;
    /// Solves Aᵀx = b with the same factors.
    Vect solve_transposed(const Vect& b) const;
    std::size_t size() const noexcept { return lu_.rows(); }

private:
    Mat lu_;
    std::vector<std::size_t> perm_;
};

Vect lu_solve(const Mat& a, const Vect& b);

/// Solves a symmetric positive definite system by Cholesky.
/// Throws NumericallySingular when a pivot drops below kSingularThreshold times
/// the largest diagonal entry.
Vect cholesky_solve(const Mat& spd, const Vect& b);

struct Svd {
    Mat u;      // n × k, orthonormal columns
    Vect sigma; // k values, descending
    Mat v;      // d × k, orthonormal columns

    Mat reconstruct() const;
};

/// Thin SVD by one-sided Jacobi rotations. Throws NoConvergence after the sweep cap.
Svd svd(const Mat& a);
Vect singular_values(const Mat& a);

/// Minimum-norm least-squares solution via the SVD pseudoinverse.
Vect lstsq(const Mat& a, const Vect& b);

double fnorm(const Mat& a);
double opnorm2(const Mat& a);
/// 1/σ_min for square input; NumericallySingular when σ_min ≤ kSingularThreshold·σ_max.
double inv_norm2(const Mat& a);
/// σ_max/σ_min; NumericallySingular when σ_min ≤ kSingularThreshold·σ_max.
double cond2(const Mat& a);

using Complex = std::complex<double>;

/// Eigenpairs of a general real matrix. Eigenvector i occupies columns 2i
/// (real part) and 2i+1 (imaginary part) of `vectors`; each is unit 2-norm.
struct EigenDecomp {
    std::vector<Complex> values;
    Mat vectors;

    std::size_t size() const noexcept { return values.size(); }
    std::vector<Complex> vector(std::size_t i) const;
};

/// Balance, Hessenberg reduction and Francis double-shift QR; eigenvectors by
/// inverse iteration. Exactly symmetric input is routed to the symmetric
/// Jacobi solver so its spectrum comes back real with an orthonormal basis.
EigenDecomp eig_general(const Mat& a);

/// Symmetric eigenproblem, values ascending, orthonormal vectors as columns.
struct SymEigen {
    Vect values;
    Mat vectors;
};
SymEigen eig_symmetric(const Mat& a);

double spectral_radius(const Mat& a);

}  // namespace poisonlab
