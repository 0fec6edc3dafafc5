#include "swdnet/trainer.hpp"

#include <cmath>
#include <cstring>

#include "swdnet/errors.hpp"
#include "swdnet/rng.hpp"

namespace swdnet {

namespace {

// pad-4 zero border, random crop back to size, random horizontal flip
void augment_batch(Batch& b, Rng& rng) {
  const int n = b.images.dim(0), c = b.images.dim(1), h = b.images.dim(2), w = b.images.dim(3);
  constexpr int pad = 4;
  std::vector<float> padded(static_cast<size_t>(c) * (h + 2 * pad) * (w + 2 * pad));
  for (int i = 0; i < n; ++i) {
    float* img = b.images.data.data() + static_cast<size_t>(i) * c * h * w;
    const int dy = static_cast<int>(rng.below(2 * pad + 1));
    const int dx = static_cast<int>(rng.below(2 * pad + 1));
    const bool flip = rng.below(2) == 1;
    std::fill(padded.begin(), padded.end(), 0.0f);
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        std::memcpy(padded.data() + (static_cast<size_t>(ch) * (h + 2 * pad) + y + pad) * (w + 2 * pad) + pad,
                    img + (static_cast<size_t>(ch) * h + y) * w, static_cast<size_t>(w) * sizeof(float));
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int sx = flip ? (w - 1 - x) : x;
          img[(static_cast<size_t>(ch) * h + y) * w + x] =
              padded[(static_cast<size_t>(ch) * (h + 2 * pad) + y + dy) * (w + 2 * pad) + sx + dx];
        }
  }
}

}  // namespace

double evaluate(ModelGraph& graph, const Dataset& data, int batch_size) {
  const int n = data.size();
  if (n == 0) return 0.0;
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  long long correct = 0;
  for (int bi = 0; bi < num_batches(n, batch_size); ++bi) {
    Batch b = gather_batch(data, order, bi, batch_size);
    Tape tape;
    Tape::Id out = forward(graph, tape, tape.input(std::move(b.images)), /*train=*/false);
    const Tensor& logits = tape.value(out);
    const int k = logits.dim(1);
    for (int i = 0; i < logits.dim(0); ++i) {
      const float* row = logits.data.data() + static_cast<size_t>(i) * k;
      int best = 0;
      for (int j = 1; j < k; ++j)
        if (row[j] > row[best]) best = j;
      if (best == b.labels[static_cast<size_t>(i)]) ++correct;
    }
  }
  return 100.0 * static_cast<double>(correct) / n;
}

TrainHistory train_loop(ModelGraph& graph, const Dataset& train, const Dataset& test,
                        SgdState& opt, const TrainLoopOptions& options, TrainLoopState& state,
                        const GradHook& hook, const EpochHook& epoch_hook) {
  if (train.size() == 0) throw ConfigError("train_loop: training dataset is empty");
  if (options.epochs < 0) throw ConfigError("train_loop: negative epoch count");
  const int total_for_lr =
      options.total_epochs_hint > 0 ? options.total_epochs_hint : options.epochs;

  TrainHistory history;
  for (int epoch = options.start_epoch; epoch < options.start_epoch + options.epochs; ++epoch) {
    opt.lr = options.lr_policy == LrPolicy::ThreePhase ? lr_at(epoch, total_for_lr)
                                                       : options.base_lr;
    const std::vector<int> order = batch_order(train.size(), options.seed, epoch);
    Rng aug_rng(mix_seed(options.seed, 0xA0Full + static_cast<uint64_t>(epoch)));

    double loss_sum = 0.0;
    double churn_sum = 0.0;
    long long churn_events = 0;
    StepInfo last_info;
    for (int bi = 0; bi < num_batches(train.size(), options.batch_size); ++bi) {
      Batch b = gather_batch(train, order, bi, options.batch_size);
      if (options.augment) augment_batch(b, aug_rng);
      const int bs = b.images.dim(0);

      graph.zero_grads();
      Tape tape;
      Tape::Id out = forward(graph, tape, tape.input(std::move(b.images)), /*train=*/true);
      Tape::Id loss = tape.softmax_cross_entropy(out, b.labels);
      const double loss_v = static_cast<double>(tape.value(loss).data[0]);
      if (!std::isfinite(loss_v))
        throw DivergenceError("non-finite loss at step " + std::to_string(state.step), state.step);
      loss_sum += loss_v * bs;
      tape.backward(loss);

      if (hook) {
        last_info = hook(state.step);
        if (last_info.reselected) {
          churn_sum += last_info.churn;
          ++churn_events;
        }
      }
      sgd_step(graph, opt, state.step);
      ++state.step;
    }

    EpochStats row;
    row.epoch = epoch;
    row.step = state.step;
    row.a = last_info.a;
    row.train_loss = loss_sum / train.size();
    row.test_acc = evaluate(graph, test, options.batch_size);
    row.churn = churn_events > 0 ? churn_sum / static_cast<double>(churn_events) : 0.0;
    row.selected_count = last_info.selected;
    history.push_back(row);
    if (epoch_hook) epoch_hook(epoch, state.step);
  }
  return history;
}

}  // namespace swdnet
