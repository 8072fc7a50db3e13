#include <gtest/gtest.h>

#include "freqshield/error.hpp"
#include "freqshield/reformer.hpp"
#include "stubs.hpp"

using namespace freqshield;

TEST(Reformer, FrequencyModelIsRejected) {
  EXPECT_THROW(ReformerBundle(test::identity_reconstructor(RepresentationMode::Frequency)), ConfigurationError);
}

TEST(Reformer, EmptyInEmptyOut) {
  ReformerBundle r(test::identity_reconstructor());
  EXPECT_TRUE(reform(r, std::vector<Image>{}).empty());
}

TEST(Reformer, IdentityStubPreservesInputsInOrder) {
  ReformerBundle r(test::identity_reconstructor());
  const std::vector<Image> in{Image(4, 4, 0.1), Image(4, 4, 0.7), Image(4, 4, 0.3)};
  const auto out = reform(r, in);
  ASSERT_EQ(out.size(), in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    for (std::size_t k = 0; k < in[i].size(); ++k) EXPECT_NEAR(out[i].values()[k], in[i].values()[k], 1e-7);
  }
}

TEST(Reformer, OutputsAreClampedToUnitRange) {
  struct Overshoot : Network {
    torch::Tensor forward(const torch::Tensor& x) override { return x * 4.0 - 1.5; }
  };
  ReformerBundle r(ReconstructionModel(test::stub_spec(), std::make_shared<Overshoot>()));
  const auto out = reform(r, std::vector<Image>{Image(2, 2, std::vector<double>{0.0, 0.3, 0.5, 1.0})});
  EXPECT_EQ(out[0].values()[0], 0.0);
  EXPECT_EQ(out[0].values()[3], 1.0);
  EXPECT_NEAR(out[0].values()[2], 0.5, 1e-7);
}

TEST(Reformer, ShapeMismatchIsShapeError) {
  ReconstructionModel m = test::identity_reconstructor();
  m.bind_input_shape(4, 4);
  ReformerBundle r(m);
  EXPECT_THROW(reform(r, std::vector<Image>{Image(4, 4, 0.1), Image(6, 4, 0.1)}), ShapeError);
}
