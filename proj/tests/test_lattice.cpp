#include "pamlab/lattice.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace pamlab;

namespace {

PotentialField two_site_zero_field()
{
    return PotentialField(LatticeBox::from_corner({0}, 2), {0.0, 0.0});
}

} // namespace

TEST(Lattice, BoxSizes)
{
    EXPECT_EQ(make_box(1, 1).size(), 3u);
    EXPECT_EQ(make_box(2, 2).size(), 25u);
    EXPECT_EQ(make_box(3, 0).size(), 1u);
    EXPECT_EQ(make_box(2, 2.9).size(), 25u);
    EXPECT_THROW(make_box(0, 1), ConfigError);
    EXPECT_THROW(make_box(1, -1), ConfigError);
    EXPECT_NEAR(log_box_volume(3, 2.5), 3 * std::log(5.0), 1e-15);
}

TEST(Lattice, SizeLimit)
{
    const auto saved = max_box_sites();
    max_box_sites() = 1000;
    EXPECT_THROW(make_box(3, 5), ConfigError);
    EXPECT_NO_THROW(make_box(3, 4));
    max_box_sites() = saved;
}

TEST(Lattice, LexicographicOrder)
{
    const auto box = make_box(2, 1, {5, -2});
    EXPECT_EQ(box.site(0), (Point{4, -3}));
    EXPECT_EQ(box.site(1), (Point{4, -2}));
    EXPECT_EQ(box.site(3), (Point{5, -3}));
    EXPECT_EQ(box.center_index(), 4u);
    for (std::size_t i = 0; i < box.size(); ++i) EXPECT_EQ(box.index(box.site(i)), i);
    EXPECT_THROW(box.index({7, 0}), ConfigError);
}

TEST(Lattice, LaplacianExamples)
{
    const auto box = make_box(1, 1);
    const auto peak = laplacian_apply(box, std::vector<double>{0.0, 1.0, 0.0});
    EXPECT_DOUBLE_EQ(peak[1], -2.0);
    const auto flat = laplacian_apply(box, std::vector<double>{1.0, 1.0, 1.0});
    EXPECT_DOUBLE_EQ(flat[2], -1.0);
    EXPECT_DOUBLE_EQ(flat[0], -1.0);
    EXPECT_DOUBLE_EQ(flat[1], 0.0);
    EXPECT_THROW(laplacian_apply(box, std::vector<double>{1.0}), ConfigError);
}

TEST(Lattice, LaplacianOfConstantCountsAbsorbedNeighbours)
{
    for (int d = 1; d <= 3; ++d) {
        const auto box = make_box(d, 2);
        const double c = 3.5;
        const auto out = laplacian_apply(box, std::vector<double>(box.size(), c));
        for (std::size_t i = 0; i < box.size(); ++i) {
            const int absorbed = for_each_neighbor(box, i, [](std::size_t) {});
            EXPECT_DOUBLE_EQ(out[i], -absorbed * c);
        }
        EXPECT_DOUBLE_EQ(out[box.center_index()], 0.0);
    }
}

TEST(Lattice, HamiltonianTwoSite)
{
    const HamiltonianOperator H(two_site_zero_field(), 1.0);
    Eigen::Matrix2d expect;
    expect << -2, 1, 1, -2;
    EXPECT_TRUE(H.dense().isApprox(expect));
}

TEST(Lattice, HamiltonianDiagonalWhenKappaZero)
{
    RngStream rng(3);
    const auto field = sample_field(make_box(2, 2), PotentialSpec::weibull(2.0), rng);
    const HamiltonianOperator H(field, 0.0);
    const Eigen::MatrixXd m = H.dense();
    EXPECT_TRUE(m.isApprox(Eigen::MatrixXd(Eigen::Map<const Eigen::VectorXd>(field.values.data(), 25).asDiagonal())));
}

TEST(Lattice, HamiltonianThreeByThree)
{
    const double kappa = 0.7;
    const auto field = constant_field(make_box(2, 1), 0.0);
    const HamiltonianOperator H(field, kappa);
    const Eigen::MatrixXd m = H.dense();
    EXPECT_EQ(H.bond_count(), 12u);
    int off = 0;
    for (int i = 0; i < 9; ++i) {
        EXPECT_DOUBLE_EQ(m(i, i), -4.0 * kappa);
        for (int j = 0; j < 9; ++j)
            if (i != j && m(i, j) != 0.0) {
                EXPECT_DOUBLE_EQ(m(i, j), kappa);
                ++off;
            }
    }
    EXPECT_EQ(off, 24);
    EXPECT_TRUE(m.isApprox(m.transpose()));
}

TEST(Lattice, MatvecMatchesLaplacianPlusPotential)
{
    RngStream rng(5);
    for (int d = 1; d <= 3; ++d) {
        const auto box = make_box(d, 2);
        const auto field = sample_field(box, PotentialSpec::weibull(2.0), rng);
        const double kappa = 0.3;
        const HamiltonianOperator H(field, kappa);
        std::vector<double> f(box.size());
        for (auto& x : f) x = rng.uniform() - 0.5;
        const auto hf = H.apply(f);
        const auto lf = laplacian_apply(box, f);
        for (std::size_t i = 0; i < box.size(); ++i)
            EXPECT_NEAR(hf[i], kappa * lf[i] + field.values[i] * f[i], 1e-14);
    }
}

TEST(Lattice, LaplacianIsNegativeSemidefinite)
{
    const HamiltonianOperator H(constant_field(make_box(2, 3), 0.0), 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H.dense());
    EXPECT_LE(es.eigenvalues().maxCoeff(), 1e-12);
}

TEST(Lattice, PrincipalEigenpairExamples)
{
    const HamiltonianOperator two(two_site_zero_field(), 1.0);
    const auto ep = principal_eigenpair(two, 1e-12);
    EXPECT_NEAR(ep.lambda, -1.0, 1e-12);
    EXPECT_NEAR(ep.vector[0], 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(ep.vector[1], 1.0 / std::sqrt(2.0), 1e-12);

    RngStream rng(9);
    const auto field = sample_field(make_box(2, 4), PotentialSpec::weibull(2.0), rng);
    const auto diag = principal_eigenpair(HamiltonianOperator(field, 0.0), 1e-12);
    EXPECT_DOUBLE_EQ(diag.lambda, field.max_value());
}

TEST(Lattice, PrincipalEigenpairResidualAndBounds)
{
    RngStream rng(21);
    for (int trial = 0; trial < 40; ++trial) {
        const int d = 1 + trial % 2;
        const double kappa = trial % 3 == 0 ? 0.1 : 1.0;
        const auto field = sample_field(make_box(d, d == 1 ? 40 : 8), PotentialSpec::weibull(2.0), rng);
        const HamiltonianOperator H(field, kappa);
        const double tol = 1e-9;
        const auto ep = principal_eigenpair(H, tol);
        const auto hv = H.apply(ep.vector);
        double res = 0.0;
        for (std::size_t i = 0; i < hv.size(); ++i) res += std::pow(hv[i] - ep.lambda * ep.vector[i], 2);
        EXPECT_LE(std::sqrt(res), tol);
        EXPECT_LE(ep.lambda, field.max_value() + 1e-12);
        EXPECT_GE(ep.lambda, field.max_value() - 2 * d * kappa - 1e-12);
        const auto sp = full_spectrum(H);
        EXPECT_NEAR(ep.lambda, sp.lambdas.front(), 1e-9);
    }
}

TEST(Lattice, FullSpectrumExamples)
{
    const auto sp = full_spectrum(HamiltonianOperator(two_site_zero_field(), 1.0));
    EXPECT_NEAR(sp.lambdas[0], -1.0, 1e-14);
    EXPECT_NEAR(sp.lambdas[1], -3.0, 1e-14);

    RngStream rng(4);
    const auto field = sample_field(make_box(2, 3), PotentialSpec::double_exponential(1.0), rng);
    const auto diag = full_spectrum(HamiltonianOperator(field, 0.0));
    auto sorted = field.values;
    std::sort(sorted.rbegin(), sorted.rend());
    for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_DOUBLE_EQ(diag.lambdas[i], sorted[i]);
}

TEST(Lattice, FullSpectrumOrthonormalAndParseval)
{
    RngStream rng(8);
    for (int d = 1; d <= 2; ++d) {
        const auto field = sample_field(make_box(d, d == 1 ? 15 : 4), PotentialSpec::weibull(2.0), rng);
        const auto sp = full_spectrum(HamiltonianOperator(field, 0.8));
        const auto n = sp.vectors.cols();
        const Eigen::MatrixXd gram = sp.vectors.transpose() * sp.vectors;
        EXPECT_LE((gram - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-10);
        for (std::size_t k = 1; k < sp.lambdas.size(); ++k) EXPECT_GE(sp.lambdas[k - 1], sp.lambdas[k]);
        double parseval = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) parseval += std::pow(sp.vectors.col(k).sum(), 2);
        EXPECT_NEAR(parseval, static_cast<double>(n), 1e-8);
    }
}

TEST(Lattice, FullSpectrumSizeLimit)
{
    const auto saved = dense_solve_limit();
    dense_solve_limit() = 10;
    EXPECT_THROW(full_spectrum(HamiltonianOperator(constant_field(make_box(1, 6), 0.0), 1.0)), ConfigError);
    dense_solve_limit() = saved;
}

TEST(Lattice, DomainMonotonicityOfPrincipalEigenvalue)
{
    RngStream rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        const auto big = sample_field(make_box(2, 5), PotentialSpec::weibull(2.0), rng);
        double prev = std::numeric_limits<double>::infinity();
        for (double r : {5.0, 4.0, 3.0, 2.0, 1.0, 0.0}) {
            const auto sub = big.restrict_to(make_box(2, r));
            const double lam = full_spectrum(HamiltonianOperator(sub, 1.0)).lambdas.front();
            EXPECT_LE(lam, prev + 1e-12);
            prev = lam;
        }
    }
}

TEST(Lattice, FieldCsvRoundTrip)
{
    RngStream rng(1);
    const auto field = sample_field(make_box(2, 2, {3, -1}), PotentialSpec::weibull(1.7), rng);
    std::stringstream ss;
    write_field_csv(ss, field);
    const std::string text = ss.str();
    EXPECT_EQ(text.substr(0, text.find('\n')), "x1,x2,xi");
    const auto back = read_field_csv(ss);
    EXPECT_TRUE(back.box == field.box);
    EXPECT_EQ(back.values, field.values);
}
