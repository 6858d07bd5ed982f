#include <doctest.h>

#include "affinity/saliency.hpp"
#include "helpers.hpp"

using namespace affinity;
using namespace testing_helpers;

namespace {

Vector ones(Index d) { return Vector::Ones(d); }

Vector positive(Index d, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ud(0.3, 3.0);
    Vector v(d);
    for (Index i = 0; i < d; ++i) v(i) = ud(rng);
    return v;
}

// Best rank-k approximation error over SVD truncation of theta.
Matrix rank_k(const SaliencyResult& s, Index k) {
    Matrix out = Matrix::Zero(s.theta.rows(), s.theta.cols());
    for (Index i = 0; i < k; ++i) out += s.lambda(i) * s.u.row(i).transpose() * s.v.row(i);
    return out;
}

}  // namespace

TEST_CASE("two-attribute example: singular values 4 and 1") {
    Matrix a(2, 2);
    a << 0, 4, -1, 0;
    const SaliencyResult s = saliency(a, ones(2), ones(2));
    CHECK(s.lambda(0) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(s.lambda(1) == doctest::Approx(1.0).epsilon(1e-14));
    Matrix v(2, 2);
    v << 0, 1, -1, 0;
    CHECK((s.u - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((s.v - v).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(s.shares(0) == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(s.shares(1) == doctest::Approx(0.2).epsilon(1e-14));
    CHECK((s.u.transpose() * s.lambda_matrix() * s.v - a).norm() < 1e-10);

    // Rank-1 truncation keeps 4 x1 y2.
    const AffinityModel t = truncate(s, 1);
    Matrix expect = Matrix::Zero(2, 2);
    expect(0, 1) = 4.0;
    CHECK((t.a - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("diagonal nonincreasing affinity is its own decomposition") {
    Matrix a = Matrix::Zero(3, 3);
    a.diagonal() << 3.0, 2.0, 0.5;
    const SaliencyResult s = saliency(a, ones(3), ones(3));
    CHECK((s.u - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((s.v - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((s.lambda - a.diagonal()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_FALSE(s.degenerate_subspace());
}

TEST_CASE("rank-one affinity has a single share") {
    std::mt19937_64 rng(5);
    const Vector u = random_matrix(4, 1, rng).col(0);
    const Vector v = random_matrix(3, 1, rng).col(0);
    const SaliencyResult s = saliency(2.5 * u * v.transpose(), ones(4), ones(3));
    CHECK(s.lambda(0) == doctest::Approx(2.5 * u.norm() * v.norm()).epsilon(1e-12));
    CHECK(s.shares(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.shares.tail(2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("decomposition invariants on random instances") {
    std::mt19937_64 rng(6);
    for (const auto& [dx, dy] : {std::pair<Index, Index>{3, 3}, {4, 2}, {2, 5}}) {
        const Matrix a = random_matrix(dx, dy, rng);
        const Vector sx = positive(dx, rng), sy = positive(dy, rng);
        const SaliencyResult s = saliency(a, sx, sy);
        const Matrix theta = sx.cwiseSqrt().asDiagonal() * a * sy.cwiseSqrt().asDiagonal();
        CHECK((s.theta - theta).norm() < 1e-12);
        CHECK((s.u.transpose() * s.lambda_matrix() * s.v - theta).norm() < 1e-10);
        CHECK((s.u.transpose() * s.u - Matrix::Identity(dx, dx)).norm() < 1e-10);
        CHECK((s.v.transpose() * s.v - Matrix::Identity(dy, dy)).norm() < 1e-10);
        CHECK(std::abs(s.shares.sum() - 1.0) < 1e-14);
        for (Index k = 1; k < s.lambda.size(); ++k) {
            CHECK(s.lambda(k) <= s.lambda(k - 1));
            CHECK(s.shares(k) <= s.shares(k - 1));
        }
        // Sign convention: dominant entry of each u row is positive.
        for (Index k = 0; k < dx; ++k) {
            Index arg;
            s.u.row(k).cwiseAbs().maxCoeff(&arg);
            CHECK(s.u(k, arg) > 0.0);
        }
        // Phi(x, y) = sum_i lambda_i x~_i y~_i for random pairs.
        for (int rep = 0; rep < 100; ++rep) {
            const Vector x = random_matrix(dx, 1, rng).col(0);
            const Vector y = random_matrix(dy, 1, rng).col(0);
            const Vector xt = s.loadings_x * x;
            const Vector yt = s.loadings_y * y;
            double rhs = 0.0;
            for (Index i = 0; i < s.lambda.size(); ++i) rhs += s.lambda(i) * xt(i) * yt(i);
            CHECK(std::abs(x.dot(a * y) - rhs) < 1e-9);
        }
    }
}

TEST_CASE("repeated calls are bit-identical") {
    std::mt19937_64 rng(7);
    const Matrix a = random_matrix(3, 4, rng);
    const SaliencyResult s1 = saliency(a, ones(3), ones(4));
    const SaliencyResult s2 = saliency(a, ones(3), ones(4));
    CHECK(s1.u == s2.u);
    CHECK(s1.v == s2.v);
    CHECK(s1.lambda == s2.lambda);
}

TEST_CASE("unit changes leave singular values and shares unchanged") {
    std::mt19937_64 rng(8);
    const Matrix a = random_matrix(3, 3, rng);
    const Vector sx = positive(3, rng), sy = positive(3, rng);
    const Vector dx = positive(3, rng), dy = positive(3, rng);
    // x -> D x: variances scale by D^2, affinity by D^{-1}.
    const Matrix a2 = dx.cwiseInverse().asDiagonal() * a * dy.cwiseInverse().asDiagonal();
    const SaliencyResult s1 = saliency(a, sx, sy);
    const SaliencyResult s2 = saliency(a2, sx.cwiseProduct(dx.cwiseAbs2()), sy.cwiseProduct(dy.cwiseAbs2()));
    CHECK((s1.lambda - s2.lambda).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((s1.shares - s2.shares).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((s1.theta - s2.theta).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("index projection is an isometry of the rescaled attributes") {
    std::mt19937_64 rng(9);
    const MatchedSample sample = MatchedSample::make(random_matrix(20, 3, rng), random_matrix(20, 3, rng));
    const Vector sx = positive(3, rng), sy = positive(3, rng);
    const SaliencyResult s = saliency(random_matrix(3, 3, rng), sx, sy);
    const auto [xt, yt] = project_indices(sample, s);
    const Vector isx = sx.cwiseSqrt().cwiseInverse();
    for (Index a = 0; a < 20; ++a)
        for (Index b = a + 1; b < 20; ++b) {
            const Vector dx = isx.cwiseProduct((sample.x.row(a) - sample.x.row(b)).transpose());
            CHECK(std::abs((xt.row(a) - xt.row(b)).norm() - dx.norm()) < 1e-9);
        }

    // Identity rotation and unit variances: indices are the attributes.
    const SaliencyResult id = saliency(Matrix::Identity(3, 3) * 2.0, ones(3), ones(3));
    const auto [xi, yi] = project_indices(sample, id);
    CHECK((xi - sample.x).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((yi - sample.y).cwiseAbs().maxCoeff() < 1e-12);

    const MatchedSample wrong = MatchedSample::make(random_matrix(5, 2, rng), random_matrix(5, 3, rng));
    CHECK_THROWS_AS(project_indices(wrong, s), DimensionMismatch);
}

TEST_CASE("truncation is the best low-rank approximation") {
    std::mt19937_64 rng(10);
    const SaliencyResult s = saliency(random_matrix(4, 4, rng), ones(4), ones(4));
    for (Index k = 1; k < 4; ++k) {
        const double best = (s.theta - rank_k(s, k)).norm();
        for (int rep = 0; rep < 100; ++rep) {
            const Matrix cand = random_matrix(4, k, rng) * random_matrix(k, 4, rng);
            CHECK(best <= (s.theta - cand).norm() + 1e-12);
        }
        CHECK(std::abs(explained_share(s, k) - s.shares.head(k).sum()) < 1e-15);
    }
    // Full-rank truncation reproduces the input.
    CHECK((truncate(s, 4).a - s.theta).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("tied singular values are flagged") {
    const SaliencyResult s = saliency(Matrix::Identity(3, 3), ones(3), ones(3));
    CHECK(s.degenerate_subspace());
    CHECK(s.tied.size() == 2);
    CHECK(s.shares(0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("nonpositive variances are rejected") {
    Vector s = ones(2);
    s(1) = 0.0;
    CHECK_THROWS_AS(saliency(Matrix::Identity(2, 2), s, ones(2)), NonPositiveVariance);
    CHECK_THROWS_AS(saliency(Matrix::Identity(2, 2), ones(2), -ones(2)), NonPositiveVariance);
}
