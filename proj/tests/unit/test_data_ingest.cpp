#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "evospec/data_ingest.hpp"

using namespace evospec;

namespace {

const char* kMeta = R"({
  "sites": [{"id": "a", "lon": -122.0, "lat": 37.0, "elev": 10},
            {"id": "b", "lon": -122.5, "lat": 37.2}],
  "central": {"id": "a", "lon": -122.0, "lat": 37.0},
  "days": [{"sunrise": 420, "sunset": 1140}]
})";

StationMetadata meta() {
  std::istringstream in(kMeta);
  return parse_metadata(in);
}

StationSet parse(const std::string& csv) {
  std::istringstream in(csv);
  return parse_station_csv(in, meta());
}

}  // namespace

TEST(Ingest, ParsesCsvAndJoinsMetadata) {
  const auto d = parse("minute,b,a,rad\n1,1.5,2,0\n2,,2.25,10\n3,1.75,2.5,20\n");
  ASSERT_EQ(d.n(), 2u);
  EXPECT_EQ(d.T(), 3u);
  EXPECT_EQ(d.records[0].site_id, "b");
  EXPECT_DOUBLE_EQ(d.records[0].lon, -122.5);
  EXPECT_DOUBLE_EQ(d.records[1].elev, 10.0);
  EXPECT_TRUE(std::isnan(d.records[0].temps[1]));
  EXPECT_EQ(d.gap_count(), 1u);
  EXPECT_DOUBLE_EQ(d.radiation[2], 20.0);
}

TEST(Ingest, CsvRoundTripIsExact) {
  auto d = parse("minute,a,b,rad\n1,0.1,0.30000000000000004,0\n2,1e-7,-3.25,12.5\n");
  std::ostringstream out;
  write_station_csv(d, out);
  const auto back = parse(out.str());
  for (std::size_t i = 0; i < d.n(); ++i)
    for (std::size_t t = 0; t < d.T(); ++t) EXPECT_EQ(back.records[i].temps[t], d.records[i].temps[t]);
  EXPECT_EQ(back.radiation, d.radiation);
}

TEST(Ingest, RejectsMalformedInput) {
  EXPECT_THROW(parse("minute,a,b,rad\n1,1,2\n"), ValidationError);
  EXPECT_THROW(parse("minute,a,b,rad\n1,1,2,0\n3,1,2,0\n"), ValidationError);
  EXPECT_THROW(parse("minute,a,zz,rad\n1,1,2,0\n"), ValidationError);
  EXPECT_THROW(parse("minute,a,b,rad\n1,x,2,0\n"), ValidationError);
}

TEST(Ingest, LinearFillAndBoundaryGap) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const auto f = fill_missing_linear({1.0, nan, nan, 4.0});
  EXPECT_DOUBLE_EQ(f[1], 2.0);
  EXPECT_DOUBLE_EQ(f[2], 3.0);
  EXPECT_THROW(fill_missing_linear({nan, 1.0, 2.0}), ValidationError);
  EXPECT_THROW(fill_missing_linear({1.0, 2.0, nan}), ValidationError);
}

TEST(Ingest, PhaseIsFourMinutesPerDegreeWest) {
  SolarClock clock;
  EXPECT_DOUBLE_EQ(local_phase_offset(clock, -123.0, -122.0), 4.0);
  EXPECT_DOUBLE_EQ(local_phase_offset(clock, -121.0, -122.0), -4.0);
  EXPECT_DOUBLE_EQ(local_phase_offset(clock, -122.0, -122.0), 0.0);
}

TEST(Ingest, ProjectionScale) {
  const auto p = project_km(1.0, 60.0, 0.0, 60.0);
  EXPECT_NEAR(p[0], 111.2 * 0.5, 1e-9);
  EXPECT_NEAR(project_km(0.0, 61.0, 0.0, 60.0)[1], 111.2, 1e-9);
}

TEST(Ingest, SelectAndDropSites) {
  const auto d = parse("minute,a,b,rad\n1,1,2,0\n2,1,2,0\n");
  EXPECT_EQ(select_sites(d, {"b"}).records.front().site_id, "b");
  EXPECT_EQ(drop_sites(d, {"b"}).n(), 1u);
  EXPECT_THROW(select_sites(d, {"q"}), ValidationError);
}

TEST(Ingest, DatasetRoundTrip) {
  auto d = fill_missing(parse("minute,a,b,rad\n1,1.5,2,0\n2,,2.25,10\n3,1.75,2.5,20\n"));
  const auto path = std::filesystem::temp_directory_path() / "evospec_test_dataset.bin";
  save_dataset(d, path);
  const auto back = load_dataset(path);
  std::filesystem::remove(path);
  ASSERT_EQ(back.n(), d.n());
  EXPECT_EQ(back.central_id, d.central_id);
  EXPECT_EQ(back.records[0].temps, d.records[0].temps);
  EXPECT_DOUBLE_EQ(back.records[0].temps[1], 1.625);
  EXPECT_EQ(back.radiation, d.radiation);
  EXPECT_EQ(back.days.size(), 1u);
}

TEST(Ingest, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125})
    EXPECT_EQ(std::stod(format_double(v)), v);
}
