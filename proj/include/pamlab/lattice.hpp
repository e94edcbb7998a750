#pragma once

// Lattice boxes Q_r = [-r, r]^d ∩ Z^d, the discrete Laplacian with Dirichlet
// (absorbing) boundary and the Anderson Hamiltonian kappa*Δ⁰ + xi on a box.

#include "pamlab/errors.hpp"
#include "pamlab/potential.hpp"
#include "pamlab/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace pamlab {

using Point = std::vector<std::int64_t>;

inline std::size_t& max_box_sites() noexcept
{
    static std::size_t limit = std::size_t{1} << 31;
    return limit;
}

class LatticeBox {
public:
    /// Q_r around `center`: side 2*floor(r)+1.
    LatticeBox(int d, double r, Point center = {}) : d_(d), r_(r)
    {
        if (d < 1) throw ConfigError("LatticeBox: d must be >= 1");
        if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("LatticeBox: r must be finite and >= 0");
        const auto radius = static_cast<std::int64_t>(std::floor(r));
        if (center.empty()) center.assign(static_cast<std::size_t>(d), 0);
        if (static_cast<int>(center.size()) != d) throw ConfigError("LatticeBox: center has wrong dimension");
        lo_ = std::move(center);
        for (auto& c : lo_) c -= radius;
        init(2.0 * static_cast<double>(radius) + 1.0);
    }

    /// Cube {lo, ..., lo + side - 1}^d; admits even sides.
    static LatticeBox from_corner(Point lo, std::size_t side)
    {
        if (lo.empty()) throw ConfigError("LatticeBox: corner must have dimension >= 1");
        if (side < 1) throw ConfigError("LatticeBox: side must be >= 1");
        LatticeBox b;
        b.d_ = static_cast<int>(lo.size());
        b.r_ = 0.5 * (static_cast<double>(side) - 1.0);
        b.lo_ = std::move(lo);
        b.init(static_cast<double>(side));
        return b;
    }

    int dim() const noexcept { return d_; }
    double r() const noexcept { return r_; }
    /// floor(r); for odd sides the box is exactly Q_radius around center().
    std::int64_t radius() const noexcept { return static_cast<std::int64_t>((side_ - 1) / 2); }
    std::size_t side() const noexcept { return side_; }
    std::size_t size() const noexcept { return size_; }
    const Point& lower() const noexcept { return lo_; }
    Point center() const
    {
        Point c = lo_;
        for (auto& x : c) x += radius();
        return c;
    }
    std::size_t stride(int k) const noexcept { return strides_[static_cast<std::size_t>(k)]; }

    /// Lexicographic index of a site (first coordinate most significant).
    std::size_t index(const Point& x) const
    {
        std::size_t idx = 0;
        for (int k = 0; k < d_; ++k) {
            const auto off = x[static_cast<std::size_t>(k)] - lo_[static_cast<std::size_t>(k)];
            if (off < 0 || off >= static_cast<std::int64_t>(side_)) throw ConfigError("LatticeBox: point outside box");
            idx += static_cast<std::size_t>(off) * strides_[static_cast<std::size_t>(k)];
        }
        return idx;
    }

    Point site(std::size_t idx) const
    {
        Point x(static_cast<std::size_t>(d_));
        for (int k = 0; k < d_; ++k) {
            const auto s = strides_[static_cast<std::size_t>(k)];
            x[static_cast<std::size_t>(k)] = static_cast<std::int64_t>(idx / s) + lo_[static_cast<std::size_t>(k)];
            idx %= s;
        }
        return x;
    }

    /// Offset of coordinate k of site idx within [0, side).
    std::size_t local_coord(std::size_t idx, int k) const noexcept
    {
        return (idx / strides_[static_cast<std::size_t>(k)]) % side_;
    }

    bool contains(const Point& x) const
    {
        for (int k = 0; k < d_; ++k) {
            const auto off = x[static_cast<std::size_t>(k)] - lo_[static_cast<std::size_t>(k)];
            if (off < 0 || off >= static_cast<std::int64_t>(side_)) return false;
        }
        return true;
    }

    std::size_t center_index() const { return index(center()); }

    bool operator==(const LatticeBox& o) const { return side_ == o.side_ && lo_ == o.lo_; }

private:
    LatticeBox() = default;

    void init(double side)
    {
        const double count = std::pow(side, d_);
        if (count > static_cast<double>(max_box_sites())) {
            throw ConfigError("LatticeBox: site count " + std::to_string(count) + " exceeds configured maximum");
        }
        side_ = static_cast<std::size_t>(side);
        size_ = 1;
        strides_.assign(static_cast<std::size_t>(d_), 1);
        for (int k = d_ - 1; k >= 0; --k) {
            strides_[static_cast<std::size_t>(k)] = size_;
            size_ *= side_;
        }
    }

    int d_ = 1;
    double r_ = 0.0;
    std::size_t side_ = 1;
    std::size_t size_ = 1;
    Point lo_;
    std::vector<std::size_t> strides_;
};

inline LatticeBox make_box(int d, double r, Point center = {})
{
    return LatticeBox(d, r, std::move(center));
}

/// log |Q_r| = d log(2 floor(r) + 1), without materializing the box.
inline double log_box_volume(int d, double r)
{
    return d * std::log(2.0 * std::floor(r) + 1.0);
}

struct PotentialField {
    LatticeBox box;
    std::vector<double> values;

    PotentialField(LatticeBox b, std::vector<double> v) : box(std::move(b)), values(std::move(v))
    {
        if (values.size() != box.size()) throw ConfigError("PotentialField: value count does not match box");
        for (double x : values)
            if (!std::isfinite(x)) throw ConfigError("PotentialField: non-finite value");
    }

    /// xi^(1) = max over the box.
    double max_value() const { return *std::max_element(values.begin(), values.end()); }
    std::size_t argmax() const
    {
        return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
    }

    /// Restriction to a sub-box contained in this field's box.
    PotentialField restrict_to(const LatticeBox& sub) const
    {
        std::vector<double> v(sub.size());
        for (std::size_t i = 0; i < sub.size(); ++i) v[i] = values[box.index(sub.site(i))];
        return PotentialField(sub, std::move(v));
    }
};

inline PotentialField sample_field(const LatticeBox& box, const PotentialSpec& spec, RngStream& rng)
{
    std::vector<double> v(box.size());
    for (auto& x : v) x = spec.sample(rng);
    return PotentialField(box, std::move(v));
}

inline PotentialField constant_field(const LatticeBox& box, double c)
{
    return PotentialField(box, std::vector<double>(box.size(), c));
}

/// Apply `fn(nbr)` to each in-box lattice neighbour of site i; returns the
/// number of neighbours that fall outside (absorbed).
template <class Fn>
int for_each_neighbor(const LatticeBox& box, std::size_t i, Fn&& fn)
{
    int absorbed = 0;
    for (int k = 0; k < box.dim(); ++k) {
        const std::size_t c = box.local_coord(i, k);
        const std::size_t s = box.stride(k);
        if (c > 0) fn(i - s); else ++absorbed;
        if (c + 1 < box.side()) fn(i + s); else ++absorbed;
    }
    return absorbed;
}

/// (Δ⁰f)(x) = Σ_{|y-x|=1} [f̃(y) - f(x)], f̃ = 0 outside the box.
inline std::vector<double> laplacian_apply(const LatticeBox& box, std::span<const double> f)
{
    if (f.size() != box.size()) throw ConfigError("laplacian_apply: field size does not match box");
    std::vector<double> out(box.size());
    const double deg = 2.0 * box.dim();
    for (std::size_t i = 0; i < box.size(); ++i) {
        double acc = 0.0;
        for_each_neighbor(box, i, [&](std::size_t j) { acc += f[j]; });
        out[i] = acc - deg * f[i];
    }
    return out;
}

/// kappa*Δ⁰ + xi on a box with Dirichlet boundary. Stored as a stencil:
/// off-diagonal entries are kappa for nearest-neighbour pairs inside the box,
/// the diagonal is xi(x) - 2 d kappa.
class HamiltonianOperator {
public:
    HamiltonianOperator(PotentialField field, double kappa) : field_(std::move(field)), kappa_(kappa)
    {
        if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ConfigError("HamiltonianOperator: kappa must be >= 0");
    }

    const LatticeBox& box() const noexcept { return field_.box; }
    const PotentialField& field() const noexcept { return field_; }
    double kappa() const noexcept { return kappa_; }
    std::size_t size() const noexcept { return field_.box.size(); }

    double diagonal(std::size_t i) const noexcept { return field_.values[i] - 2.0 * box().dim() * kappa_; }

    /// y = H x
    void apply(std::span<const double> x, std::span<double> y) const
    {
        const auto& b = box();
        for (std::size_t i = 0; i < b.size(); ++i) {
            double acc = 0.0;
            if (kappa_ != 0.0) for_each_neighbor(b, i, [&](std::size_t j) { acc += x[j]; });
            y[i] = kappa_ * acc + diagonal(i) * x[i];
        }
    }

    std::vector<double> apply(std::span<const double> x) const
    {
        std::vector<double> y(size());
        apply(x, y);
        return y;
    }

    Eigen::MatrixXd dense() const
    {
        const auto n = static_cast<Eigen::Index>(size());
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
        for (std::size_t i = 0; i < size(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            m(ii, ii) = diagonal(i);
            for_each_neighbor(box(), i, [&](std::size_t j) { m(ii, static_cast<Eigen::Index>(j)) = kappa_; });
        }
        return m;
    }

    /// Number of unordered nearest-neighbour pairs inside the box.
    std::size_t bond_count() const
    {
        std::size_t twice = 0;
        for (std::size_t i = 0; i < size(); ++i) for_each_neighbor(box(), i, [&](std::size_t) { ++twice; });
        return twice / 2;
    }

    /// Induced 1-norm of (H - shift*I).
    double norm1(double shift = 0.0) const
    {
        double worst = 0.0;
        for (std::size_t i = 0; i < size(); ++i) {
            int inside = 0;
            for_each_neighbor(box(), i, [&](std::size_t) { ++inside; });
            worst = std::max(worst, std::abs(diagonal(i) - shift) + kappa_ * inside);
        }
        return worst;
    }

private:
    PotentialField field_;
    double kappa_;
};

inline HamiltonianOperator assemble_hamiltonian(const PotentialField& field, double kappa)
{
    return HamiltonianOperator(field, kappa);
}

struct EigenPair {
    double lambda = 0.0;
    std::vector<double> vector;
    double residual = 0.0;
    int iterations = 0;
};

namespace detail {

inline void fix_sign(Eigen::Ref<Eigen::VectorXd> v)
{
    const double scale = v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v[i]) > 1e-8 * scale) {
            if (v[i] < 0.0) v = -v;
            return;
        }
    }
}

} // namespace detail

/// Largest eigenvalue of H with unit eigenvector, by restarted Lanczos with
/// full reorthogonalization. Converged when ||H e - λ e|| <= tol.
inline EigenPair principal_eigenpair(const HamiltonianOperator& H, double tol = 1e-10, int max_restarts = 1000)
{
    const auto n = static_cast<Eigen::Index>(H.size());
    const Eigen::Index m = std::min<Eigen::Index>(n, 64);

    // Start from the flat vector tilted toward the potential maximum.
    Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
    v[static_cast<Eigen::Index>(H.field().argmax())] += 1.0;
    v.normalize();

    Eigen::MatrixXd V(n, m + 1);
    Eigen::VectorXd w(n);
    std::vector<double> alpha, beta;
    EigenPair out;
    double residual = std::numeric_limits<double>::infinity();

    for (int restart = 0; restart < max_restarts; ++restart) {
        alpha.clear();
        beta.clear();
        V.col(0) = v;
        Eigen::Index k = 0;
        for (Eigen::Index j = 0; j < m; ++j) {
            H.apply(std::span<const double>(V.col(j).data(), static_cast<std::size_t>(n)),
                    std::span<double>(w.data(), static_cast<std::size_t>(n)));
            const double a = V.col(j).dot(w);
            alpha.push_back(a);
            for (int pass = 0; pass < 2; ++pass) {
                const Eigen::VectorXd proj = V.leftCols(j + 1).transpose() * w;
                w.noalias() -= V.leftCols(j + 1) * proj;
            }
            k = j + 1;
            const double b = w.norm();
            if (j + 1 == m || b <= 1e-13 * std::max(1.0, std::abs(a))) break;
            beta.push_back(b);
            V.col(j + 1) = w / b;
        }

        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
        for (Eigen::Index i = 0; i < k; ++i) {
            T(i, i) = alpha[static_cast<std::size_t>(i)];
            if (i + 1 < k) T(i, i + 1) = T(i + 1, i) = beta[static_cast<std::size_t>(i)];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
        const Eigen::VectorXd y = es.eigenvectors().col(k - 1);
        v = V.leftCols(k) * y;
        v.normalize();

        H.apply(std::span<const double>(v.data(), static_cast<std::size_t>(n)),
                std::span<double>(w.data(), static_cast<std::size_t>(n)));
        const double theta = v.dot(w);
        residual = (w - theta * v).norm();
        out.lambda = theta;
        out.iterations = restart + 1;
        if (residual <= tol) {
            detail::fix_sign(v);
            out.vector.assign(v.data(), v.data() + n);
            out.residual = residual;
            return out;
        }
    }
    throw NumericalError("principal_eigenpair: Lanczos did not converge", residual);
}

struct Spectrum {
    std::vector<double> lambdas;   // descending
    Eigen::MatrixXd vectors;       // column k is e_k
};

inline std::size_t& dense_solve_limit() noexcept
{
    static std::size_t limit = 4096;
    return limit;
}

/// All eigenpairs by dense symmetric eigendecomposition, descending order.
inline Spectrum full_spectrum(const HamiltonianOperator& H)
{
    if (H.size() > dense_solve_limit()) {
        throw ConfigError("full_spectrum: " + std::to_string(H.size()) + " sites exceed dense-solve limit "
                          + std::to_string(dense_solve_limit()));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H.dense());
    if (es.info() != Eigen::Success) throw NumericalError("full_spectrum: eigensolver failed", 0.0);
    const auto n = static_cast<Eigen::Index>(H.size());
    Spectrum s;
    s.lambdas.resize(static_cast<std::size_t>(n));
    s.vectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        s.lambdas[static_cast<std::size_t>(k)] = es.eigenvalues()[n - 1 - k];
        s.vectors.col(k) = es.eigenvectors().col(n - 1 - k);
        detail::fix_sign(s.vectors.col(k));
    }
    return s;
}

// ---------------------------------------------------------------------------
// CSV persistence: header "x1,...,xd,xi", one row per site in lexicographic
// order.

inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_field_csv(std::ostream& os, const PotentialField& field)
{
    const int d = field.box.dim();
    for (int k = 0; k < d; ++k) os << 'x' << (k + 1) << ',';
    os << "xi\n";
    for (std::size_t i = 0; i < field.box.size(); ++i) {
        const Point x = field.box.site(i);
        for (auto c : x) os << c << ',';
        os << format_double(field.values[i]) << '\n';
    }
}

inline PotentialField read_field_csv(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("read_field_csv: empty input");
    const int cols = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
    const int d = cols - 1;
    if (d < 1) throw ConfigError("read_field_csv: header must be x1,...,xd,xi");
    for (int k = 0; k < d; ++k) {
        const std::string expect = "x" + std::to_string(k + 1);
        const auto pos = line.find(expect);
        if (pos == std::string::npos) throw ConfigError("read_field_csv: bad header");
    }
    std::vector<Point> pts;
    std::vector<double> vals;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        Point p;
        for (int k = 0; k < d; ++k) {
            if (!std::getline(ls, cell, ',')) throw ConfigError("read_field_csv: short row");
            p.push_back(std::stoll(cell));
        }
        if (!std::getline(ls, cell, ',')) throw ConfigError("read_field_csv: short row");
        pts.push_back(std::move(p));
        vals.push_back(std::stod(cell));
    }
    if (pts.empty()) throw ConfigError("read_field_csv: no rows");
    Point lo = pts.front(), hi = pts.front();
    for (const auto& p : pts)
        for (int k = 0; k < d; ++k) {
            lo[static_cast<std::size_t>(k)] = std::min(lo[static_cast<std::size_t>(k)], p[static_cast<std::size_t>(k)]);
            hi[static_cast<std::size_t>(k)] = std::max(hi[static_cast<std::size_t>(k)], p[static_cast<std::size_t>(k)]);
        }
    const auto width = hi[0] - lo[0];
    for (int k = 0; k < d; ++k) {
        if (hi[static_cast<std::size_t>(k)] - lo[static_cast<std::size_t>(k)] != width)
            throw ConfigError("read_field_csv: rows do not form a cube");
    }
    auto box = LatticeBox::from_corner(lo, static_cast<std::size_t>(width + 1));
    if (pts.size() != box.size()) throw ConfigError("read_field_csv: row count does not match box");
    std::vector<double> ordered(box.size());
    std::vector<char> seen(box.size(), 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto idx = box.index(pts[i]);
        if (seen[idx]) throw ConfigError("read_field_csv: duplicate site");
        seen[idx] = 1;
        ordered[idx] = vals[i];
    }
    return PotentialField(std::move(box), std::move(ordered));
}

} // namespace pamlab
