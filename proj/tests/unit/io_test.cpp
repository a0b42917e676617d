#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <sstream>

#include "arrayloc/csv_io.hpp"
#include "arrayloc/errors.hpp"
#include "arrayloc/evaluation.hpp"
#include "arrayloc/model_io.hpp"
#include "arrayloc/wav.hpp"
#include "synthetic.hpp"

using namespace arrayloc;

namespace {

CalibrationSet small_set(std::uint64_t seed, int room_dim = 2) {
  std::mt19937_64 rng(seed);
  CalibrationBuilder b(3, room_dim);
  for (int k = 0; k < 4; ++k) {
    std::vector<ConcatenatedDoa> obs;
    for (int i = 0; i < 3; ++i) obs.push_back(synth::as_concat(synth::random_concat(3, rng), 1000 * k + 64 * i));
    Eigen::VectorXd loc = Eigen::VectorXd::Random(room_dim);
    b.add_point(k + 1, loc, obs);
  }
  return b.build();
}

}  // namespace

TEST(ModelIo, AffineRoundTripIsExact) {
  const auto map = fit_affine(small_set(1), full_mask(3));
  std::stringstream ss;
  write_model(ss, map);
  const auto back = std::get<AffineMap>(read_model(ss));
  EXPECT_EQ(back.offset, map.offset);
  EXPECT_EQ(back.coeffs, map.coeffs);
  EXPECT_EQ(back.active, map.active);
  EXPECT_EQ(back.arrays, map.arrays);
  EXPECT_EQ(back.report.normal_matrix_rank, map.report.normal_matrix_rank);
}

TEST(ModelIo, PcaRoundTripIsExact) {
  const auto model = fit_pca(small_set(2), 2);
  const auto path = std::filesystem::temp_directory_path() / "arrayloc_model_test.txt";
  save_model(path, model);
  const auto back = std::get<PcaModel>(load_model(path));
  EXPECT_EQ(back.basis, model.basis);
  EXPECT_EQ(back.singular_values, model.singular_values);
  EXPECT_EQ(back.rank, model.rank);
  std::filesystem::remove(path);
}

TEST(ModelIo, RejectsMalformedInput) {
  std::istringstream bad_magic("nonsense 1\n");
  EXPECT_THROW(read_model(bad_magic), DataError);
  std::istringstream truncated("arrayloc-model 1\nkind affine\nmatrix offset 2 1\n0.5\n");
  EXPECT_THROW(read_model(truncated), DataError);
}

TEST(CsvIo, CalibrationRoundTrip) {
  for (int dim : {2, 3}) {
    const auto cal = small_set(3, dim);
    std::stringstream ss;
    write_calibration_csv(ss, cal);
    const auto back = read_calibration_csv(ss);
    EXPECT_EQ(back.doas, cal.doas);
    EXPECT_EQ(back.locations, cal.locations);
    EXPECT_EQ(back.timestamps_ms, cal.timestamps_ms);
    EXPECT_EQ(back.point_ids(), cal.point_ids());
    EXPECT_EQ(back.arrays, cal.arrays);
  }
}

TEST(CsvIo, CalibrationHeaderLayout) {
  std::stringstream ss;
  write_calibration_csv(ss, small_set(4));
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header, "timestamp_ms,point_id,r_x,r_y,d0_x,d0_y,d0_z,d1_x,d1_y,d1_z,d2_x,d2_y,d2_z,m0,m1,m2");
}

TEST(CsvIo, JoinedRowsRoundTrip) {
  std::vector<JoinedRow> rows;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 5; ++i) {
    std::vector<std::optional<DoaVector>> per(4);
    for (int a = 0; a < 4; ++a)
      if ((i + a) % 3) per[static_cast<std::size_t>(a)] = DoaVector::from_unit(synth::random_upper(rng));
    rows.push_back({64 * i, concat_doas(per, 64 * i)});
  }
  std::stringstream ss;
  write_joined_csv(ss, rows);
  const auto back = read_joined_csv(ss);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].bin_start_ms, rows[i].bin_start_ms);
    EXPECT_EQ(back[i].doa.values, rows[i].doa.values);
    EXPECT_EQ(back[i].doa.active, rows[i].doa.active);
  }
}

TEST(CsvIo, EstimatesRoundTrip) {
  EstimateTable t;
  t.columns = {"x", "y"};
  t.timestamps_ms = {0, 64, 128};
  t.values.resize(3, 2);
  t.values << 0.1, 1.0 / 3.0, -2.5, 1e-17, M_PI, 7;
  t.active_counts = {5, 4, 3};
  t.methods = {"affine-missing", "affine-missing", "affine-missing"};
  std::stringstream ss;
  write_estimates_csv(ss, t);
  const auto back = read_estimates_csv(ss);
  EXPECT_EQ(back.columns, t.columns);
  EXPECT_EQ(back.timestamps_ms, t.timestamps_ms);
  EXPECT_EQ(back.values, t.values);
  EXPECT_EQ(back.active_counts, t.active_counts);
  EXPECT_EQ(back.methods, t.methods);
}

TEST(CsvIo, GroundTruthRoundTrip) {
  const auto s = default_paper_scenario();
  const auto recs = synthesize_doa_stream(s, "line-56");
  std::stringstream ss;
  write_ground_truth_csv(ss, recs);
  const auto back = read_ground_truth_csv(ss);
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].timestamp_ms, recs[i].timestamp_ms);
    EXPECT_EQ(back[i].position, recs[i].true_position);
    EXPECT_EQ(back[i].emitted.values, recs[i].emitted.values);
  }
}

TEST(CsvIo, MalformedRowsAreDataErrors) {
  std::istringstream in("timestamp_ms,point_id,r_x,r_y,d0_x,d0_y,d0_z,m0\n0,1,0.5\n");
  EXPECT_THROW(read_calibration_csv(in), DataError);
}

TEST(Wav, FloatRoundTrip) {
  AudioBuffer a;
  a.sample_rate = 16000;
  a.samples = Eigen::MatrixXd::Random(8, 100) * 0.5;
  a.samples = a.samples.cast<float>().cast<double>();
  std::stringstream ss;
  write_wav(ss, a);
  const auto back = read_wav(ss);
  EXPECT_EQ(back.sample_rate, 16000);
  EXPECT_EQ(back.samples, a.samples);
}

TEST(Wav, Reads16BitPcm) {
  std::string bytes = "RIFF";
  auto put = [&](auto v) { bytes.append(reinterpret_cast<const char*>(&v), sizeof(v)); };
  put(std::uint32_t{36 + 8});
  bytes += "WAVEfmt ";
  put(std::uint32_t{16});
  put(std::uint16_t{1});
  put(std::uint16_t{2});
  put(std::uint32_t{16000});
  put(std::uint32_t{64000});
  put(std::uint16_t{4});
  put(std::uint16_t{16});
  bytes += "data";
  put(std::uint32_t{8});
  for (std::int16_t v : {std::int16_t{16384}, std::int16_t{-32768}, std::int16_t{0}, std::int16_t{1}}) put(v);
  std::istringstream in(bytes);
  const auto a = read_wav(in);
  ASSERT_EQ(a.samples.rows(), 2);
  ASSERT_EQ(a.samples.cols(), 2);
  EXPECT_EQ(a.samples(0, 0), 0.5);
  EXPECT_EQ(a.samples(1, 0), -1.0);
  EXPECT_EQ(a.samples(1, 1), 1.0 / 32768.0);
}

TEST(Wav, RawPcm) {
  std::string bytes;
  for (float f : {0.25f, -0.5f, 1.0f, 0.0f}) bytes.append(reinterpret_cast<const char*>(&f), 4);
  std::istringstream in(bytes);
  const auto a = read_raw_pcm(in, 2, 8000, RawFormat::f32le);
  EXPECT_EQ(a.sample_rate, 8000);
  ASSERT_EQ(a.samples.cols(), 2);
  EXPECT_EQ(a.samples(1, 0), -0.5);
  EXPECT_EQ(a.samples(0, 1), 1.0);
  std::istringstream junk("not a wav file");
  EXPECT_THROW(read_wav(junk), DataError);
}

TEST(Evaluation, IdenticalEstimatesHaveZeroError) {
  const Eigen::MatrixXd truth = Eigen::MatrixXd::Random(50, 2);
  const auto m = position_errors(truth, truth);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_EQ(m.count, 50u);
}

TEST(Evaluation, ConstantOffsetGivesNormAndBias) {
  const Eigen::MatrixXd truth = Eigen::MatrixXd::Random(50, 2);
  const Eigen::RowVector2d v(0.3, -0.4);
  const auto m = position_errors(truth.rowwise() + v, truth);
  EXPECT_NEAR(m.rmse, 0.5, 1e-12);
  EXPECT_NEAR((m.bias - v.transpose()).norm(), 0.0, 1e-12);
}

TEST(Evaluation, RectangleShapeFromLegs) {
  Eigen::MatrixXd pts(400, 2);
  const Eigen::Vector2d c[5] = {{0, 0}, {1.37, 0}, {1.37, 0.76}, {0, 0.76}, {0, 0}};
  for (int i = 0; i < 400; ++i) {
    const int leg = i / 100;
    const double t = (i % 100) / 100.0;
    pts.row(i) = ((1 - t) * c[leg] + t * c[leg + 1]).transpose();
  }
  const auto legs = legs_from_heading(pts);
  EXPECT_EQ(legs.front(), 0);
  EXPECT_EQ(legs.back(), 3);
  const auto shape = polygon_shape(pts, legs, true);
  ASSERT_EQ(shape.corners.size(), 4u);
  EXPECT_NEAR(shape.long_side, 1.37, 1e-9);
  EXPECT_NEAR(shape.short_side, 0.76, 1e-9);
  EXPECT_NEAR(shape.long_short_ratio, 1.37 / 0.76, 1e-9);
}

TEST(Evaluation, LinearFitRecoversAffineRelation) {
  const Eigen::MatrixXd est = Eigen::MatrixXd::Random(40, 2);
  Eigen::Matrix2d c;
  c << 1.2, 0.3, -0.4, 0.9;
  const Eigen::Vector2d r0(2, -1);
  const Eigen::MatrixXd truth = (est * c.transpose()).rowwise() + r0.transpose();
  const auto fit = fit_linear(est, truth);
  EXPECT_LT((fit.coeffs - c).norm(), 1e-12);
  EXPECT_LT((fit.intercept - r0).norm(), 1e-12);
  EXPECT_NEAR(spread(Eigen::MatrixXd::Constant(5, 2, 3.0)), 0.0, 1e-15);
}
