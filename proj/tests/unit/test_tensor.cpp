#include <doctest.h>

#include <cmath>
#include <sstream>

#include "air/tensor/gradcheck.hpp"
#include "air/tensor/ops.hpp"
#include "air/tensor/serialize.hpp"
#include "test_util.hpp"

using namespace air;
using air::testing::random_tensor;
using air::testing::weighted_sum;

TEST_CASE("tensor enforces data length") {
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), std::invalid_argument);
    Tensor t({2, 3}, 1.5);
    CHECK(t.numel() == 6);
    CHECK(t.at({1, 2}) == 1.5);
    CHECK_THROWS(t.at({2, 0}));
}

TEST_CASE("matmul by identity returns the operand") {
    std::mt19937_64 rng(1);
    Var a(random_tensor({3, 3}, rng));
    Var eye(Tensor::identity(3));
    CHECK(matmul(eye, a).value() == a.value());
}

TEST_CASE("softmax rows sum to one") {
    std::mt19937_64 rng(2);
    Var x(random_tensor({4, 5, 7}, rng, -30.0, 30.0));
    const Tensor p = softmax_last(x).value();
    for (std::size_t r = 0; r < 20; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < 7; ++j) s += p[r * 7 + j];
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("rotary logits depend only on relative position") {
    std::mt19937_64 rng(3);
    const Tensor q = random_tensor({1, 1, 64}, rng);
    const Tensor k = random_tensor({1, 1, 64}, rng);
    auto logit = [&](double pq, double pk) {
        const std::vector<double> posq{pq}, posk{pk};
        const Tensor rq = rope(Var(q), posq).value();
        const Tensor rk = rope(Var(k), posk).value();
        double dot = 0.0;
        for (std::size_t i = 0; i < 64; ++i) dot += rq[i] * rk[i];
        return dot;
    };
    CHECK(std::abs(logit(3, 7) - logit(10, 14)) < 1e-10);
    // The op and the reference kernel agree.
    std::vector<double> v(q.data().begin(), q.data().end());
    rope_rotate(v, 5.0);
    const std::vector<double> pos{5.0};
    const Tensor r = rope(Var(q), pos).value();
    for (std::size_t i = 0; i < 64; ++i) CHECK(v[i] == doctest::Approx(r[i]).epsilon(1e-14));
}

TEST_CASE("axial rotary logits depend only on the row and column offsets") {
    std::mt19937_64 rng(31);
    const Tensor q = random_tensor({1, 1, 16}, rng);
    const Tensor k = random_tensor({1, 1, 16}, rng);
    auto logit = [&](double rq, double cq, double rk, double ck) {
        const std::vector<double> r1{rq}, c1{cq}, r2{rk}, c2{ck};
        const Tensor a = rope_axial(Var(q), r1, c1).value();
        const Tensor b = rope_axial(Var(k), r2, c2).value();
        double dot = 0.0;
        for (std::size_t i = 0; i < 16; ++i) dot += a[i] * b[i];
        return dot;
    };
    CHECK(std::abs(logit(1, 2, 3, 0) - logit(5, 7, 7, 5)) < 1e-10);
    CHECK(std::abs(logit(1, 2, 3, 0) - logit(1, 2, 3, 1)) > 1e-6);
    // Each half matches the 1D kernel applied to its own axis.
    std::vector<double> lo(q.data().begin(), q.data().begin() + 8), hi(q.data().begin() + 8, q.data().end());
    rope_rotate(lo, 2.0);
    rope_rotate(hi, 3.0);
    const std::vector<double> r{2.0}, c{3.0};
    const Tensor out = rope_axial(Var(q), r, c).value();
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(out[i] == doctest::Approx(lo[i]).epsilon(1e-14));
        CHECK(out[8 + i] == doctest::Approx(hi[i]).epsilon(1e-14));
    }
    CHECK_THROWS_AS(rope_axial(Var(Tensor({1, 1, 6})), r, c), std::invalid_argument);
}

TEST_CASE("scalar product gradient") {
    Var x(Tensor::scalar(3.0), true);
    Var y(Tensor::scalar(-2.5), true);
    backward(mul(x, y));
    CHECK(x.grad().item() == -2.5);
    CHECK(y.grad().item() == 3.0);
}

TEST_CASE("backward rejects non-scalar loss") {
    Var x(Tensor({2}, 1.0), true);
    CHECK_THROWS_AS(backward(scale(x, 2.0)), std::invalid_argument);
}

TEST_CASE("detach is a forward no-op and blocks gradients") {
    std::mt19937_64 rng(4);
    Var x(random_tensor({5}, rng), true);
    Var w(random_tensor({5}, rng), true);
    Var dx = detach(x);
    CHECK(dx.value() == x.value());
    CHECK_FALSE(dx.requires_grad());
    backward(sum(mul(dx, w)));
    CHECK_FALSE(x.has_grad());
    CHECK(w.grad() == x.value());
}

TEST_CASE("detached branch contributes zero upstream") {
    Var x(Tensor::scalar(2.0), true);
    // loss = x*x + detach(x)*x: only the live factors count.
    Var loss = add(mul(x, x), mul(detach(x), x));
    backward(loss);
    CHECK(x.grad().item() == doctest::Approx(2.0 * 2.0 + 2.0));
}

TEST_CASE("shape errors name the op") {
    Var a(Tensor({2, 3}));
    Var b(Tensor({3, 2}));
    try {
        add(a, b);
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("add") != std::string::npos);
        CHECK(std::string(e.what()).find("[2, 3]") != std::string::npos);
    }
    CHECK_THROWS_AS(matmul(a, Var(Tensor({2, 2}))), std::invalid_argument);
    CHECK_THROWS_AS(add_row(a, Var(Tensor({2}))), std::invalid_argument);
}

TEST_CASE("no-grad guard records nothing") {
    Var w(Tensor({3}, 1.0), true);
    {
        NoGradGuard guard;
        Var y = scale(w, 2.0);
        CHECK_FALSE(y.requires_grad());
        CHECK(y.node()->inputs.empty());
    }
    CHECK(scale(w, 2.0).requires_grad());
}

TEST_CASE("embedding rows and vocabulary bounds") {
    std::mt19937_64 rng(5);
    Var table(random_tensor({4, 3}, rng), true);
    const std::vector<int> ids{2, 0, 2};
    const Tensor e = embedding(ids, {1, 3}, table).value();
    for (std::size_t j = 0; j < 3; ++j) CHECK(e[j] == e[6 + j]);
    const std::vector<int> bad{4};
    CHECK_THROWS_AS(embedding(bad, {1}, table), std::out_of_range);
}

TEST_CASE("split and merge heads are inverse") {
    std::mt19937_64 rng(6);
    Var x(random_tensor({2, 5, 12}, rng));
    CHECK(merge_heads(split_heads(x, 3), 3).value() == x.value());
}

namespace {

struct OpCase {
    const char* name;
    std::vector<Shape> shapes;
    std::function<Var(const std::vector<Var>&)> op;
};

}  // namespace

TEST_CASE("every differentiable op matches central differences") {
    std::mt19937_64 rng(7);
    const std::vector<double> pos{0.0, 1.0, 2.0, 5.0};
    const std::vector<double> rows{3.0, 1.0, 0.0, 2.0};
    const std::vector<int> ids{1, 0, 3, 1, 2, 2};
    const std::vector<OpCase> cases = {
        {"add", {{3, 4}, {3, 4}}, [](const auto& v) { return add(v[0], v[1]); }},
        {"sub", {{3, 4}, {3, 4}}, [](const auto& v) { return sub(v[0], v[1]); }},
        {"mul", {{3, 4}, {3, 4}}, [](const auto& v) { return mul(v[0], v[1]); }},
        {"scale", {{3, 4}}, [](const auto& v) { return scale(v[0], -1.7); }},
        {"tanh", {{3, 4}}, [](const auto& v) { return tanh(v[0]); }},
        {"gelu", {{3, 4}}, [](const auto& v) { return gelu(v[0]); }},
        {"silu", {{3, 4}}, [](const auto& v) { return silu(v[0]); }},
        {"add_row", {{2, 3, 4}, {4}}, [](const auto& v) { return add_row(v[0], v[1]); }},
        {"broadcast_rows", {{4}}, [](const auto& v) { return broadcast_rows(v[0], 2, 3); }},
        {"matmul", {{2, 3, 4}, {4, 5}}, [](const auto& v) { return matmul(v[0], v[1]); }},
        {"bmm", {{2, 3, 4}, {2, 4, 5}}, [](const auto& v) { return bmm(v[0], v[1]); }},
        {"bmm_nt", {{2, 3, 4}, {2, 5, 4}}, [](const auto& v) { return bmm_nt(v[0], v[1]); }},
        {"softmax_last", {{3, 6}}, [](const auto& v) { return softmax_last(v[0]); }},
        {"rms_norm", {{3, 6}, {6}}, [](const auto& v) { return rms_norm(v[0], v[1]); }},
        {"layer_norm", {{3, 6}, {6}}, [](const auto& v) { return layer_norm(v[0], v[1]); }},
        {"embedding", {{4, 3}}, [&](const auto& v) { return embedding(ids, {2, 3}, v[0]); }},
        {"rope", {{2, 4, 6}}, [&](const auto& v) { return rope(v[0], pos); }},
        {"rope_axial", {{2, 4, 8}}, [&](const auto& v) { return rope_axial(v[0], pos, rows); }},
        {"concat_seq", {{2, 3, 4}, {2, 1, 4}}, [](const auto& v) { return concat_seq(v[0], v[1]); }},
        {"slice_seq", {{2, 5, 3}}, [](const auto& v) { return slice_seq(v[0], 1, 3); }},
        {"split_heads", {{2, 3, 8}}, [](const auto& v) { return split_heads(v[0], 2); }},
        {"merge_heads", {{4, 3, 2}}, [](const auto& v) { return merge_heads(v[0], 2); }},
        {"mean", {{3, 4}}, [](const auto& v) { return mean(v[0]); }},
    };
    for (const auto& c : cases) {
        for (int trial = 0; trial < 3; ++trial) {
            std::vector<Tensor> inputs;
            for (const auto& s : c.shapes) inputs.push_back(random_tensor(s, rng, -2.0, 2.0));
            const Shape out_shape = c.op([&] {
                std::vector<Var> v;
                for (const auto& t : inputs) v.emplace_back(t);
                return v;
            }()).shape();
            const Tensor weights = random_tensor(out_shape, rng);
            const auto r = gradcheck(
                [&](const std::vector<Var>& v) { return weighted_sum(c.op(v), weights); }, inputs);
            INFO("op " << c.name << " rel error " << r.max_rel_error);
            CHECK(r.max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("two-layer MLP gradients match finite differences") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        const std::vector<Tensor> inputs = {random_tensor({4, 6}, rng), random_tensor({6, 8}, rng),
                                            random_tensor({8}, rng), random_tensor({8, 3}, rng)};
        const auto r = gradcheck(
            [](const std::vector<Var>& v) {
                Var h = tanh(add_row(matmul(v[0], v[1]), v[2]));
                Var o = matmul(h, v[3]);
                return mean(mul(o, o));
            },
            inputs);
        CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("forward evaluation is pure") {
    std::mt19937_64 rng(9);
    const Tensor x = random_tensor({2, 3, 8}, rng);
    const Tensor w = random_tensor({8, 8}, rng);
    auto run = [&] {
        Var h = split_heads(matmul(Var(x), Var(w)), 2);
        return softmax_last(bmm_nt(h, h)).value();
    };
    CHECK(run() == run());
}

TEST_CASE("replacing a node by its detached copy leaves forward values unchanged") {
    std::mt19937_64 rng(10);
    Var x(random_tensor({3, 4}, rng), true);
    Var w(random_tensor({4, 4}, rng), true);
    Var h = gelu(matmul(x, w));
    const Tensor live = softmax_last(matmul(h, w)).value();
    const Tensor cut = softmax_last(matmul(detach(h), w)).value();
    CHECK(live == cut);
}

TEST_CASE("tensor records round-trip through the binary format") {
    std::mt19937_64 rng(11);
    std::stringstream ss;
    std::vector<TensorRecord> written;
    for (int i = 0; i < 5; ++i) {
        Shape s;
        for (int r = 0; r < i; ++r) s.push_back(1 + rng() % 4);
        TensorRecord rec{"t" + std::to_string(i), random_tensor(s, rng, -1e6, 1e6), {{"index", i}}};
        write_tensor_record(ss, rec);
        written.push_back(rec);
    }
    for (const auto& w : written) {
        auto r = read_tensor_record(ss);
        REQUIRE(r.has_value());
        CHECK(r->name == w.name);
        CHECK(r->tensor == w.tensor);
        CHECK(r->meta == w.meta);
    }
    CHECK_FALSE(read_tensor_record(ss).has_value());
}

TEST_CASE("tensor record header is length-prefixed little-endian JSON") {
    std::stringstream ss;
    write_tensor_record(ss, {"x", Tensor({1}, std::vector<double>{1.0}), {}});
    const std::string bytes = ss.str();
    const std::size_t len = static_cast<unsigned char>(bytes[0]);
    CHECK(bytes[1] == 0);
    CHECK(bytes.substr(8, len).find("\"shape\":[1]") != std::string::npos);
    // 1.0 = 0x3FF0000000000000, little-endian.
    CHECK(static_cast<unsigned char>(bytes[8 + len + 7]) == 0x3F);
    CHECK(static_cast<unsigned char>(bytes[8 + len + 6]) == 0xF0);
}
