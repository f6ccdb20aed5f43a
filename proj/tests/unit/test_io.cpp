#include <gtest/gtest.h>

#include <sstream>

#include "sandpile/io.hpp"
#include "sandpile/sandpile.hpp"

using namespace sandpile;

TEST(Io, ConfigCsv) {
  const VolumeGraph v = build_tree_volume(2, 1);
  EXPECT_EQ(config_csv(HeightConfig({3, 1, 2, 3}), v), "site,generation,height\n0,0,3\n1,1,1\n2,1,2\n3,1,3\n");
}

TEST(Io, JsonRoundTrip) {
  const HeightConfig c({1, 2, 3, 3, 2});
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
  EXPECT_EQ(config_to_json(c).dump(), "[1,2,3,3,2]");
}

TEST(Io, RecurrentCsvRows) {
  std::ostringstream os;
  write_recurrent_csv(os, build_tree_prefix(2, 2));
  const std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "h0,h1");
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 9);
}
