#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "structprobe/sweep.hpp"
#include "support/synthetic.hpp"

using namespace structprobe;

namespace {

TrainConfig quick_config() {
    TrainConfig c;
    c.rank = 8;
    c.initial_lr = 0.01;
    c.max_epochs = 25;
    c.seed = 3;
    return c;
}

SweepInputs inputs(const synthetic::PlantedTask& t) { return {&t.embeddings, t.train, t.dev, t.test}; }

}  // namespace

TEST(LayerSweep, PlantedLayerWins) {
    synthetic::PlantedOptions opt;
    opt.n_train = 100;
    opt.n_dev = opt.n_test = 30;
    opt.num_layers = 4;
    opt.planted_layer = 2;
    const auto task = synthetic::make_planted(opt);
    const auto dir = std::filesystem::temp_directory_path() / "structprobe_test_layer_sweep";
    std::filesystem::remove_all(dir);
    const auto table = layer_sweep(quick_config(), inputs(task), {true, dir});
    ASSERT_EQ(table.rows.size(), 4u);
    const auto best = std::max_element(table.rows.begin(), table.rows.end(),
                                       [](const auto& a, const auto& b) { return a.uuas_dev < b.uuas_dev; });
    EXPECT_EQ(best->key, 2);
    for (const auto& r : table.rows) {
        EXPECT_TRUE(r.uuas_test.has_value());
        if (r.key != 2) EXPECT_LT(r.uuas_dev, table.rows[2].uuas_dev);
    }
    EXPECT_TRUE(std::filesystem::exists(dir / "layer_002" / "best.ckpt"));
}

TEST(LayerSweep, SingleLayerGivesOneRow) {
    synthetic::PlantedOptions opt;
    opt.n_train = 30;
    opt.n_dev = 10;
    opt.n_test = 0;
    const auto task = synthetic::make_planted(opt);
    auto cfg = quick_config();
    cfg.max_epochs = 2;
    const auto table = layer_sweep(cfg, inputs(task));
    ASSERT_EQ(table.rows.size(), 1u);
    EXPECT_FALSE(table.rows[0].uuas_test.has_value());
}

TEST(RankSweep, RankOneTrailsIntrinsicRank) {
    synthetic::PlantedOptions opt;
    opt.n_train = 150;
    opt.n_dev = 40;
    opt.n_test = 0;
    opt.max_tokens = 5;
    opt.intrinsic_rank = 4;
    opt.dim = 10;
    const auto task = synthetic::make_planted(opt);
    auto cfg = quick_config();
    cfg.max_epochs = 40;
    const std::vector<long> ranks{1, 4};
    const auto table = rank_sweep(cfg, ranks, inputs(task));
    ASSERT_EQ(table.rows.size(), 2u);
    EXPECT_EQ(table.key_name, "rank");
    EXPECT_LT(table.rows[0].uuas_dev, table.rows[1].uuas_dev);
    EXPECT_DOUBLE_EQ(table.rows[1].uuas_dev, 100.0);
}

TEST(RankSweep, ValidatesRanks) {
    EXPECT_THROW(validate_ranks(std::vector<long>{4, 8, 4}), std::invalid_argument);
    EXPECT_THROW(validate_ranks(std::vector<long>{}), std::invalid_argument);
    EXPECT_THROW(validate_ranks(std::vector<long>{0}), std::invalid_argument);
    EXPECT_EQ(kDefaultRanks, (std::vector<long>{1, 2, 4, 8, 16, 32, 64, 128, 256}));
}

TEST(SweepCsv, RoundTripAndChart) {
    SweepTable t{"layer", {{0, 60.5, 61.25}, {1, 70.0, 69.5}, {2, 65.0, std::nullopt}}};
    const auto path = std::filesystem::temp_directory_path() / "structprobe_test_sweep.csv";
    write_sweep_csv(t, path);
    const auto back = read_sweep_csv(path);
    ASSERT_EQ(back.rows.size(), 3u);
    EXPECT_EQ(back.rows[1].key, 1);
    EXPECT_DOUBLE_EQ(*back.rows[0].uuas_test, 61.25);
    EXPECT_FALSE(back.rows[2].uuas_test.has_value());

    const auto chart = sweep_chart({{"rbf", back}}, false);
    EXPECT_EQ(chart.y_label, "UUAS (dev)");
    ASSERT_EQ(chart.series[0].points.size(), 3u);
    EXPECT_DOUBLE_EQ(chart.series[0].points[1].second, 70.0);
    EXPECT_NO_THROW(render_line_chart(chart));
}
