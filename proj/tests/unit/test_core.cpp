#include <doctest.h>

#include "affinity/core.hpp"
#include "affinity/parallel.hpp"
#include "affinity/stats.hpp"
#include "helpers.hpp"

#include <boost/math/special_functions/gamma.hpp>

using namespace affinity;
using namespace testing_helpers;

TEST_CASE("standardize uses the population variance") {
    Matrix x(2, 1), y(2, 1);
    x << 1, 3;
    y << 0, 4;
    auto [s, rec] = standardize(MatchedSample::make(x, y));
    CHECK(s.x(0, 0) == doctest::Approx(-1.0));
    CHECK(s.x(1, 0) == doctest::Approx(1.0));
    CHECK(rec.x[0].mean == doctest::Approx(2.0));
    CHECK(rec.x[0].std == doctest::Approx(1.0));
    CHECK(rec.y[0].std == doctest::Approx(2.0));
}

TEST_CASE("standardize is idempotent and enforces moments") {
    std::mt19937_64 rng(11);
    const MatchedSample raw = MatchedSample::make(random_matrix(50, 3, rng, 4.0),
                                                  random_matrix(50, 2, rng, 0.3));
    auto [once, rec1] = standardize(raw);
    auto [twice, rec2] = standardize(once);
    CHECK((once.x - twice.x).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((once.y - twice.y).cwiseAbs().maxCoeff() < 1e-12);
    for (const auto& c : rec2.x) {
        CHECK(std::abs(c.mean) < 1e-12);
        CHECK(std::abs(c.std - 1.0) < 1e-12);
    }
    CHECK(once.x.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
    CHECK((column_variances(once.y).array() - 1.0).abs().maxCoeff() < 1e-10);
}

TEST_CASE("standardize rejects constant columns") {
    Matrix x(3, 2), y(3, 1);
    x << 1, 5, 2, 5, 3, 5;
    y << 1, 2, 4;
    auto sample = MatchedSample::make(x, y, {"age", "height"}, {"educ"});
    try {
        standardize(sample);
        FAIL("expected ZeroVarianceColumn");
    } catch (const ZeroVarianceColumn& e) {
        CHECK(e.column() == "height");
    }
}

TEST_CASE("kronecker matches its defining formula") {
    CHECK(kronecker(Matrix::Identity(2, 2), Matrix::Identity(2, 2)).data.isIdentity());
    Matrix a(1, 1), b(1, 1);
    a << 2;
    b << 3;
    CHECK(kronecker(a, b).data(0, 0) == 6.0);

    std::mt19937_64 rng(3);
    const Matrix ra = random_matrix(2, 3, rng);
    const Matrix rb = random_matrix(2, 2, rng);
    const DoublyIndexedMatrix r = kronecker(ra, rb);
    for (Index i = 0; i < 2; ++i)
        for (Index j = 0; j < 2; ++j)
            for (Index k = 0; k < 3; ++k)
                for (Index l = 0; l < 2; ++l) CHECK(r(i, j, k, l) == ra(i, k) * rb(j, l));
    // (a x b) applied to M is a M b'.
    const Matrix m = random_matrix(3, 2, rng);
    CHECK((r.apply(m) - ra * m * rb.transpose()).norm() < 1e-12);
    CHECK_THROWS_AS(kronecker(Matrix(), rb), DimensionMismatch);
}

TEST_CASE("flatten and unflatten are inverse bijections") {
    const Index dx = 3, dy = 4;
    std::vector<int> seen(dx * dy, 0);
    for (Index i = 0; i < dx; ++i)
        for (Index j = 0; j < dy; ++j) {
            const Index k = flatten(i, j, dy);
            seen[static_cast<std::size_t>(k)]++;
            CHECK(unflatten(k, dy) == std::make_pair(i, j));
        }
    for (int s : seen) CHECK(s == 1);
    std::mt19937_64 rng(5);
    const Matrix m = random_matrix(dx, dy, rng);
    CHECK(unvectorize(vectorize(m), dx, dy) == m);
    CHECK(vectorize(m)(flatten(1, 2, dy)) == m(1, 2));
}

TEST_CASE("cross covariance") {
    Matrix x(2, 1), y(2, 1);
    x << 1, -1;
    y << 1, -1;
    CHECK(cross_covariance(MatchedSample::make(x, y))(0, 0) == doctest::Approx(1.0));

    std::mt19937_64 rng(9);
    const Matrix z = random_matrix(30, 2, rng);
    const MatchedSample s = MatchedSample::make(z, z);
    CHECK((cross_covariance(s) - z.transpose() * z / 30.0).norm() < 1e-12);

    const MatchedSample t = MatchedSample::make(random_matrix(40, 2, rng), random_matrix(40, 3, rng));
    CHECK((cross_covariance(t) - cross_covariance(t.swapped()).transpose()).norm() < 1e-14);

    const Index n = 100000;
    const MatchedSample ind = standardize(MatchedSample::make(random_matrix(n, 2, rng),
                                                              random_matrix(n, 2, rng))).first;
    CHECK(cross_covariance(ind).cwiseAbs().maxCoeff() < 3.0 / std::sqrt(double(n)));
}

TEST_CASE("marginals, couplings and models validate their invariants") {
    DiscreteMarginal p = DiscreteMarginal::uniform(Matrix::Random(4, 2));
    CHECK_NOTHROW(p.validate());
    p.weights(0) += 1e-9;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);

    Matrix b(2, 2);
    b << 3, 0, 0, 4;
    const AffinityModel m = AffinityModel::from_b(b);
    CHECK(m.normalized);
    CHECK(std::abs(m.a.norm() - 1.0) < 1e-12);
    CHECK(m.sigma == doctest::Approx(0.2));
    CHECK((m.b() - b).norm() < 1e-12);
    const AffinityModel zero = AffinityModel::from_b(Matrix::Zero(2, 2));
    CHECK_FALSE(zero.normalized);
    CHECK(zero.sigma == 1.0);
}

TEST_CASE("doubly-indexed algebra composes like the underlying maps") {
    std::mt19937_64 rng(21);
    const Matrix a1 = random_matrix(2, 2, rng), b1 = random_matrix(3, 3, rng);
    const Matrix a2 = random_matrix(2, 2, rng), b2 = random_matrix(3, 3, rng);
    const DoublyIndexedMatrix prod = kronecker(a1, b1) * kronecker(a2, b2);
    CHECK((prod.data - kronecker(a1 * a2, b1 * b2).data).norm() < 1e-12);
    CHECK((kronecker(a1, b1).transpose().data - kronecker(a1.transpose(), b1.transpose()).data)
              .norm() < 1e-14);
    CHECK(DoublyIndexedMatrix::identity(2, 3).data.isIdentity());
}

TEST_CASE("chi-square survival matches boost") {
    for (double df : {1.0, 2.0, 4.0, 9.0, 30.0})
        for (double x : {0.01, 0.5, 1.0, 3.84, 9.49, 20.0, 60.0}) {
            const double ref = boost::math::gamma_q(0.5 * df, 0.5 * x);
            CHECK(std::abs(chi2_survival(x, df) - ref) < 1e-12);
        }
    CHECK(chi2_survival(0.0, 4.0) == 1.0);
    CHECK(std::abs(chi2_survival(3.841458820694124, 1.0) - 0.05) < 1e-12);
}

TEST_CASE("seed derivation is deterministic and spreads replicates") {
    CHECK(derive_seed(7, 3) == derive_seed(7, 3));
    CHECK(derive_seed(7, 3) != derive_seed(7, 4));
    CHECK(derive_seed(7, 3) != derive_seed(8, 3));
    std::vector<int> hits(10, 0);
    parallel_for(10, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);
}
