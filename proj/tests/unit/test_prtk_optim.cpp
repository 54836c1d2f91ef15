#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "prefiner/gradcheck.hpp"
#include "prefiner/optim.hpp"
#include "prefiner/prtk.hpp"

using namespace prefiner;
using namespace testing_helpers;

TEST(Prtk, RoundTripWithinFloatPrecision) {
  for (Shape s : {Shape{}, Shape{1}, Shape{3, 5}, Shape{2, 3, 4}, Shape{2, 1, 3, 2}}) {
    Tensor t = random_tensor(s, 17);
    std::stringstream buf;
    write_prtk(buf, t);
    Tensor back = read_prtk(buf);
    ASSERT_EQ(back.shape(), s);
    for (std::size_t i = 0; i < t.size(); ++i) {
      EXPECT_NEAR(back.data()[i], t.data()[i], 1e-6 * std::max(1.0, std::abs(t.data()[i])));
    }
  }
}

TEST(Prtk, HeaderLayout) {
  std::stringstream buf;
  write_prtk(buf, Tensor::from({2, 1}, {1.0, -2.0}));
  const std::string bytes = buf.str();
  ASSERT_EQ(bytes.size(), 4u + 1 + 1 + 2 * 4 + 2 * 4);
  EXPECT_EQ(bytes.substr(0, 4), "PRTK");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 2);
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 2u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[10]), 1u);
  // 1.0f little-endian is 00 00 80 3f.
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 0x80u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[17]), 0x3fu);
}

TEST(Prtk, Errors) {
  std::stringstream bad("PRTX\x01\x00");
  EXPECT_TRUE(throws_code([&] { read_prtk(bad); }, ErrorCode::ParseError));

  std::stringstream buf;
  write_prtk(buf, Tensor::from({3}, {1, 2, 3}));
  std::string bytes = buf.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 2));
  EXPECT_TRUE(throws_code([&] { read_prtk(truncated); }, ErrorCode::ParseError));

  bytes[4] = 9;
  std::stringstream version(bytes);
  EXPECT_TRUE(throws_code([&] { read_prtk(version); }, ErrorCode::FormatVersionMismatch));

  EXPECT_TRUE(throws_code([] { load_prtk("/nonexistent/x.prtk"); }, ErrorCode::Io));
}

TEST(Prtk, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "prefiner_rt.prtk";
  Tensor t = random_tensor({4, 3}, 2);
  save_prtk(path, t);
  Tensor back = load_prtk(path);
  EXPECT_LT(max_abs_diff(back, t), 1e-6);
}

TEST(AdamW, FirstStepMatchesHandComputation) {
  Tensor w = Tensor::from({2}, {1.0, -2.0}, true);
  w.mutable_grad()[0] = 0.5;
  w.mutable_grad()[1] = -4.0;
  std::vector<Tensor> params{w};
  AdamWState st;
  AdamWConfig cfg{0.1, 0.9, 0.999, 1e-8, 0.01};
  adamw_step(params, st, cfg);
  // After bias correction m_hat = g and v_hat = g^2, so the step is lr * sign(g).
  const double w0 = 1.0 * (1 - 0.1 * 0.01) - 0.1 * 0.5 / (0.5 + 1e-8);
  const double w1 = -2.0 * (1 - 0.1 * 0.01) + 0.1 * 4.0 / (4.0 + 1e-8);
  EXPECT_NEAR(w.data()[0], w0, 1e-15);
  EXPECT_NEAR(w.data()[1], w1, 1e-15);
  EXPECT_EQ(st.steps, 1u);
}

TEST(AdamW, SecondStepMatchesRecurrence) {
  Tensor w = Tensor::from({1}, {0.3}, true);
  std::vector<Tensor> params{w};
  AdamWState st;
  AdamWConfig cfg{0.01, 0.9, 0.999, 1e-8, 0.1};
  double m = 0, v = 0, x = 0.3;
  const double grads[2] = {0.2, -0.7};
  for (int t = 1; t <= 2; ++t) {
    w.mutable_grad()[0] = grads[t - 1];
    adamw_step(params, st, cfg);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    x -= 0.01 * 0.1 * x;
    x -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(w.data()[0], x, 1e-15);
}

TEST(AdamW, Errors) {
  std::vector<Tensor> params{Tensor::zeros({2})};
  AdamWState st;
  EXPECT_TRUE(throws_code([&] { adamw_step(params, st, {}); }, ErrorCode::MissingGrad));
}

TEST(AdamW, MinimizesQuadratic) {
  Tensor w = Tensor::from({3}, {2.0, -1.0, 0.5}, true);
  std::vector<Tensor> params{w};
  AdamWState st;
  AdamWConfig cfg{0.05, 0.9, 0.999, 1e-8, 0.0};
  for (int i = 0; i < 500; ++i) {
    zero_grads(params);
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = sum_all(square(w));
    }
    tape.backward(loss);
    adamw_step(params, st, cfg);
  }
  for (double x : w.values()) EXPECT_LT(std::abs(x), 1e-2);
}

TEST(FiniteDiff, AgreesOnCorrectRules) {
  Tensor x = random_tensor({4}, 3, true);
  EXPECT_LT(finite_diff_check([](const Tensor& a) { return sum_all(pow(a, 3.0)); }, x), 1e-6);
  // Points away from the clamp edges.
  Tensor y = Tensor::from({3}, {-0.5, 0.1, 0.4}, true);
  EXPECT_LT(finite_diff_check([](const Tensor& a) { return sum_all(clamp(a, -0.2, 0.2)); }, y), 1e-6);
}

TEST(FiniteDiff, FlagsAHiddenDependency) {
  // detach() hides the second term from the tape but not from the numeric
  // estimate, so the two disagree by 1 per coordinate.
  Tensor x = random_tensor({3}, 4, true);
  EXPECT_GT(finite_diff_check([](const Tensor& a) { return add(sum_all(square(a)), sum_all(a.detach())); }, x), 0.3);
}
