#include <gtest/gtest.h>

#include "check.hpp"
#include "mmgraph/graphconv.hpp"

using namespace mmgraph;
using testutil::gradient_error;
using testutil::probe;
using testutil::random_tensor;

namespace {

SageParams random_sage(std::mt19937_64& rng, std::size_t in, std::size_t d, std::size_t layers, std::size_t out) {
    SageParams p;
    for (std::size_t k = 0; k < layers; ++k) p.layers.push_back(random_tensor(rng, k == 0 ? in : d, d));
    p.wo = random_tensor(rng, layers * d, out);
    p.bo = random_tensor(rng, 1, out);
    return p;
}

Tensor reversed_rows(const Tensor& x) {
    const std::size_t r = x.rows(), c = x.cols();
    std::vector<double> v(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) v[i * c + j] = x(r - 1 - i, j);
    return Tensor({r, c}, std::move(v));
}

double row_change(const Tensor& a, const Tensor& b, std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += std::abs(a(i, j) - b(i, j));
    return s;
}

}  // namespace

TEST(SageLayer, NoEdgesIsIdentityOnUnitRows) {
    const Tensor n = Tensor::matrix({{0.6, 0.8, 0.0}, {0.0, 0.0, 1.0}});
    const Tensor out = sage_layer({n, Tensor::zeros(2, 2)}, Tensor::identity(3));
    for (std::size_t i = 0; i < n.numel(); ++i) EXPECT_NEAR(out.data()[i], n.data()[i], 1e-15);
}

TEST(SageLayer, TwoNodeExample) {
    const Tensor out = sage_layer({Tensor::identity(2), Tensor::matrix({{0, 1}, {1, 0}})}, Tensor::identity(2));
    for (double v : out.data()) EXPECT_NEAR(v, std::sqrt(2.0) / 2.0, 1e-15);
}

TEST(SageLayer, RowsUnitOrZero) {
    std::mt19937_64 rng(1);
    const Tensor out = sage_layer({random_tensor(rng, 6, 4), random_tensor(rng, 6, 6, 0, 1)}, random_tensor(rng, 4, 5));
    for (std::size_t i = 0; i < 6; ++i) {
        double ss = 0.0;
        for (std::size_t j = 0; j < 5; ++j) ss += out(i, j) * out(i, j);
        EXPECT_TRUE(std::abs(ss - 1.0) < 1e-12 || ss == 0.0);
    }
}

TEST(SageLayer, ShapeErrors) {
    EXPECT_THROW(sage_layer({Tensor::zeros(3, 2), Tensor::zeros(3, 3)}, Tensor::zeros(3, 2)), ShapeError);
    EXPECT_THROW(sage_layer({Tensor::zeros(3, 2), Tensor::zeros(4, 4)}, Tensor::zeros(2, 2)), ShapeError);
}

TEST(Encoder, ConcatWidth) {
    std::mt19937_64 rng(2);
    const auto one = random_sage(rng, 3, 8, 1, 8);
    const auto two = random_sage(rng, 3, 8, 2, 8);
    EXPECT_EQ(two.wo.rows(), 16u);
    const Tensor n = random_tensor(rng, 5, 3);
    EXPECT_EQ(unimodal_encode({Modality::Language, n}, {GdmParams{}}, one).nodes.shape(), (Shape{5, 8}));
    EXPECT_EQ(unimodal_encode({Modality::Language, n}, {GdmParams{}}, two).nodes.shape(), (Shape{5, 8}));
    SageParams bad = two;
    bad.wo = random_tensor(rng, 8, 8);
    EXPECT_THROW(unimodal_encode({Modality::Language, n}, {GdmParams{}}, bad), ShapeError);
}

TEST(Encoder, SingleIterationIsLayerThenProjection) {
    std::mt19937_64 rng(3);
    const auto p = random_sage(rng, 3, 4, 1, 2);
    const Tensor n = random_tensor(rng, 5, 3);
    const auto g = unimodal_encode({Modality::Visual, n}, {GdmParams{}}, p);
    const Tensor expect = relu(add_bias(matmul(sage_layer({n, g.adjacency}, p.layers[0]), p.wo), p.bo));
    for (std::size_t i = 0; i < expect.numel(); ++i) EXPECT_EQ(g.nodes.data()[i], expect.data()[i]);
}

TEST(Encoder, ReversalEquivarianceUnderGdm) {
    std::mt19937_64 rng(4);
    const auto p = random_sage(rng, 3, 4, 2, 4);
    const Tensor n = random_tensor(rng, 7, 3);
    const auto fwd = unimodal_encode({Modality::Acoustic, n}, {GdmParams{}}, p).nodes;
    const auto rev = unimodal_encode({Modality::Acoustic, reversed_rows(n)}, {GdmParams{}}, p).nodes;
    const Tensor back = reversed_rows(rev);
    for (std::size_t i = 0; i < fwd.numel(); ++i) EXPECT_NEAR(fwd.data()[i], back.data()[i], 1e-12);

    // Palindromic input: mirrored nodes get identical outputs.
    const Tensor half = random_tensor(rng, 3, 3);
    const Tensor pal = concat_rows({half, random_tensor(rng, 1, 3), reversed_rows(half)});
    const auto out = unimodal_encode({Modality::Acoustic, pal}, {GdmParams{}}, p).nodes;
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out(i, j), out(6 - i, j), 1e-12);
}

TEST(Encoder, NoEdgesMeansNoCrossTalk) {
    std::mt19937_64 rng(5);
    const auto p = random_sage(rng, 3, 4, 2, 4);
    const Tensor zero = Tensor::zeros(5, 5);
    const Tensor n = random_tensor(rng, 5, 3);
    const Tensor base = sage_stack(n, zero, p);
    Tensor m = n.detach();
    m.mutable_data()[2 * 3 + 1] += 0.7;
    const Tensor moved = sage_stack(m, zero, p);
    for (std::size_t i = 0; i < 5; ++i) {
        if (i == 2) continue;
        EXPECT_EQ(row_change(base, moved, i), 0.0);
    }
}

TEST(Encoder, GdmReachabilityRadius) {
    std::mt19937_64 rng(6);
    const std::size_t t = 14, n_cut = 3, layers = 2;
    const std::size_t radius = layers * (n_cut - 1);
    // Positive weights on positive inputs keep every relu active, so reachable rows must move.
    SageParams p;
    p.layers = {random_tensor(rng, 3, 5, 0.1, 1.0), random_tensor(rng, 5, 5, 0.1, 1.0)};
    p.wo = random_tensor(rng, 10, 5, 0.1, 1.0);
    p.bo = random_tensor(rng, 1, 5, 0.1, 1.0);
    const Tensor adj = build_gdm(t, {2.0, n_cut}).matrix;
    const Tensor n = random_tensor(rng, t, 3, 0.2, 1.0);
    const Tensor base = sage_stack(n, adj, p);
    for (std::size_t src = 0; src < t; ++src) {
        Tensor m = n.detach();
        for (std::size_t j = 0; j < 3; ++j) m.mutable_data()[src * 3 + j] += 0.5 + 0.1 * static_cast<double>(j);
        const Tensor moved = sage_stack(m, adj, p);
        for (std::size_t i = 0; i < t; ++i) {
            const std::size_t gap = i > src ? i - src : src - i;
            if (gap > radius)
                EXPECT_EQ(row_change(base, moved, i), 0.0) << "src " << src << " row " << i;
            else
                EXPECT_GT(row_change(base, moved, i), 0.0) << "src " << src << " row " << i;
        }
    }
}

TEST(Encoder, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(7);
    auto p = random_sage(rng, 3, 4, 2, 3);
    Tensor n = random_tensor(rng, 5, 3);
    Tensor adj = random_tensor(rng, 5, 5, 0.0, 1.0);
    std::vector<Tensor> inputs{n, adj, p.wo, p.bo};
    for (const auto& w : p.layers) inputs.push_back(w);
    EXPECT_LT(gradient_error([&] { return probe(sage_stack(n, adj, p)); }, inputs), 1e-4);
}

TEST(Encoder, IndirectGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(8);
    auto p = random_sage(rng, 3, 4, 2, 3);
    Tensor n = random_tensor(rng, 5, 3, 0.1, 1.0);
    IndirectParams ip{random_tensor(rng, 3, 3, 0.1, 1.0), random_tensor(rng, 3, 3, 0.1, 1.0),
                      random_tensor(rng, 3, 3, 0.1, 1.0), random_tensor(rng, 3, 3, 0.1, 1.0), 1e-8};
    const AdjacencySpec spec{ip};
    std::vector<Tensor> inputs{n, ip.w1, ip.w2, ip.wq, ip.wp, p.wo, p.bo};
    for (const auto& w : p.layers) inputs.push_back(w);
    EXPECT_LT(gradient_error([&] { return probe(unimodal_encode({Modality::Language, n}, spec, p).nodes); }, inputs),
              1e-4);
}
