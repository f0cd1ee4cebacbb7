#include "odaf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "odaf/errors.hpp"

namespace odaf {

namespace {

std::vector<std::size_t> infer_episode_starts(const std::vector<Transition>& transitions) {
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    if (i == 0 || transitions[i - 1].done || transitions[i - 1].next_state != transitions[i].state) {
      starts.push_back(i);
    }
  }
  return starts;
}

template <typename T>
void seeded_shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[rng.index(i)]);
  }
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

TransitionDataset::TransitionDataset(int num_states, int num_actions, std::vector<Transition> transitions,
                                     std::string source_id, std::vector<std::size_t> episode_starts)
    : num_states_(num_states),
      num_actions_(num_actions),
      source_id_(std::move(source_id)),
      transitions_(std::move(transitions)),
      episode_starts_(std::move(episode_starts)) {
  if (num_states <= 0 || num_actions <= 0) throw std::invalid_argument("TransitionDataset: dimensions must be positive");
  const auto s_count = static_cast<std::size_t>(num_states);
  counts_s_.assign(s_count, 0);
  counts_sa_.assign(s_count * static_cast<std::size_t>(num_actions), 0);
  counts_sas_.assign(s_count * static_cast<std::size_t>(num_actions), {});
  state_support_.assign(s_count, false);
  terminal_seen_.assign(s_count, false);

  for (std::size_t i = 0; i < transitions_.size(); ++i) {
    const auto& t = transitions_[i];
    if (t.state < 0 || t.state >= num_states || t.next_state < 0 || t.next_state >= num_states || t.action < 0 ||
        t.action >= num_actions) {
      throw std::invalid_argument("TransitionDataset: transition " + std::to_string(i) + " has an index out of range");
    }
    if (!std::isfinite(t.reward)) {
      throw std::invalid_argument("TransitionDataset: transition " + std::to_string(i) + " has a non-finite reward");
    }
    ++counts_s_[static_cast<std::size_t>(t.state)];
    ++counts_sa_[pair_index(t.state, t.action)];
    ++counts_sas_[pair_index(t.state, t.action)][t.next_state];
    state_support_[static_cast<std::size_t>(t.state)] = true;
    state_support_[static_cast<std::size_t>(t.next_state)] = true;
    if (t.done) terminal_seen_[static_cast<std::size_t>(t.next_state)] = true;
  }

  if (episode_starts_.empty()) {
    episode_starts_ = infer_episode_starts(transitions_);
  } else if (episode_starts_.front() != 0 || !std::is_sorted(episode_starts_.begin(), episode_starts_.end()) ||
             episode_starts_.back() >= std::max<std::size_t>(transitions_.size(), 1)) {
    throw std::invalid_argument("TransitionDataset: malformed episode boundaries");
  }
}

int TransitionDataset::count_sas(int s, int a, int next) const {
  const auto& hist = counts_sas_[pair_index(s, a)];
  const auto it = hist.find(next);
  return it == hist.end() ? 0 : it->second;
}

std::vector<int> TransitionDataset::state_support() const {
  std::vector<int> out;
  for (int s = 0; s < num_states_; ++s) {
    if (state_support_[static_cast<std::size_t>(s)]) out.push_back(s);
  }
  return out;
}

std::vector<int> TransitionDataset::visited_states() const {
  std::vector<int> out;
  for (int s = 0; s < num_states_; ++s) {
    if (counts_s_[static_cast<std::size_t>(s)] > 0) out.push_back(s);
  }
  return out;
}

std::vector<int> TransitionDataset::terminal_states() const {
  std::vector<int> out;
  for (int s = 0; s < num_states_; ++s) {
    if (terminal_seen_[static_cast<std::size_t>(s)]) out.push_back(s);
  }
  return out;
}

std::vector<int> TransitionDataset::observed_next_states() const {
  std::vector<bool> seen(static_cast<std::size_t>(num_states_), false);
  for (const auto& t : transitions_) seen[static_cast<std::size_t>(t.next_state)] = true;
  std::vector<int> out;
  for (int s = 0; s < num_states_; ++s) {
    if (seen[static_cast<std::size_t>(s)]) out.push_back(s);
  }
  return out;
}

std::vector<double> TransitionDataset::behavior_policy(int s) const {
  const int n = count_s(s);
  if (n == 0) throw SupportError("behavior_policy: state " + std::to_string(s) + " was never visited", s);
  std::vector<double> out(static_cast<std::size_t>(num_actions_));
  for (int a = 0; a < num_actions_; ++a) out[static_cast<std::size_t>(a)] = static_cast<double>(count_sa(s, a)) / n;
  return out;
}

std::span<const Transition> TransitionDataset::episode(std::size_t i) const {
  const std::size_t begin = episode_starts_.at(i);
  const std::size_t end = i + 1 < episode_starts_.size() ? episode_starts_[i + 1] : transitions_.size();
  return {transitions_.data() + begin, end - begin};
}

std::vector<double> TransitionDataset::episode_returns() const {
  std::vector<double> out;
  if (transitions_.empty()) return out;
  for (std::size_t i = 0; i < episode_starts_.size(); ++i) {
    double total = 0.0;
    for (const auto& t : episode(i)) total += t.reward;
    out.push_back(total);
  }
  return out;
}

std::string mdp_identifier(const TabularMdp& mdp) {
  std::ostringstream text;
  text.precision(17);
  for (double p : mdp.transition) text << p << ',';
  for (double r : mdp.reward) text << r << ',';
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "mdp-%dx%d-%016llx", mdp.num_states, mdp.num_actions,
                static_cast<unsigned long long>(fnv1a(text.str())));
  return buffer;
}

namespace {

template <typename ChooseAction>
TransitionDataset rollout_impl(const TabularMdp& mdp, int episodes, int horizon, std::uint64_t seed,
                               ChooseAction&& choose) {
  if (horizon < 1) throw std::invalid_argument("rollout: horizon must be at least 1");
  if (episodes < 0) throw std::invalid_argument("rollout: negative episode count");
  Rng rng(seed);
  std::vector<Transition> transitions;
  std::vector<std::size_t> starts;
  for (int e = 0; e < episodes; ++e) {
    int state = sample_initial_state(mdp, rng);
    const std::size_t first = transitions.size();
    for (int t = 0; t < horizon; ++t) {
      if (mdp.terminal[state]) break;
      const auto action = choose(state, t, rng);
      if (!action) break;
      const auto result = step(mdp, state, *action, rng);
      transitions.push_back({state, *action, result.reward, result.next_state, result.done});
      state = result.next_state;
      if (result.done) break;
    }
    if (transitions.size() > first) starts.push_back(first);
  }
  return TransitionDataset(mdp.num_states, mdp.num_actions, std::move(transitions), mdp_identifier(mdp),
                           std::move(starts));
}

}  // namespace

TransitionDataset rollout(const TabularMdp& mdp, const SoftmaxPolicy& policy, int episodes, int horizon,
                          std::uint64_t seed) {
  if (policy.num_states() != mdp.num_states || policy.num_actions() != mdp.num_actions) {
    throw std::invalid_argument("rollout: policy shape does not match the MDP");
  }
  return rollout_impl(mdp, episodes, horizon, seed,
                      [&](int state, int, Rng& rng) -> std::optional<int> { return policy.sample(state, rng); });
}

TransitionDataset rollout(const TabularMdp& mdp, std::span<const int> actions, int episodes, int horizon,
                          std::uint64_t seed) {
  for (int a : actions) {
    if (a < 0 || a >= mdp.num_actions) throw std::invalid_argument("rollout: scripted action out of range");
  }
  return rollout_impl(mdp, episodes, horizon, seed, [&](int, int t, Rng&) -> std::optional<int> {
    if (static_cast<std::size_t>(t) >= actions.size()) return std::nullopt;
    return actions[static_cast<std::size_t>(t)];
  });
}

StitchingScripts stitching_scripts() {
  constexpr int up = static_cast<int>(Move::up);
  constexpr int down = static_cast<int>(Move::down);
  constexpr int right = static_cast<int>(Move::right);
  StitchingScripts scripts;
  scripts.detour = {up, up, up, right, right, right, right, right, right, down, down, down};
  // last two moves bump against the pocket floor
  scripts.fragment = {right, right, right, right, right, down, down, down, down, down};
  return scripts;
}

TransitionDataset make_stitching_dataset(const GridMaze& maze, int episodes_per_family, std::uint64_t seed) {
  if (!(maze == stitching_maze())) throw std::invalid_argument("make_stitching_dataset: maze is not the stitching maze");
  if (episodes_per_family < 0) throw std::invalid_argument("make_stitching_dataset: negative episode count");
  const TabularMdp mdp = compile(maze);
  const auto scripts = stitching_scripts();
  const auto detour = rollout(mdp, scripts.detour, 1, maze.horizon, seed);
  const auto fragment = rollout(mdp, scripts.fragment, 1, maze.horizon, seed);

  std::vector<int> order;
  for (int i = 0; i < episodes_per_family; ++i) {
    order.push_back(0);
    order.push_back(1);
  }
  Rng rng(seed);
  seeded_shuffle(order, rng);

  std::vector<Transition> transitions;
  std::vector<std::size_t> starts;
  for (int family : order) {
    starts.push_back(transitions.size());
    const auto& source = family == 0 ? detour.transitions() : fragment.transitions();
    transitions.insert(transitions.end(), source.begin(), source.end());
  }
  return TransitionDataset(mdp.num_states, mdp.num_actions, std::move(transitions), mdp_identifier(mdp),
                           std::move(starts));
}

TransitionDataset mix_datasets(const TransitionDataset& expert, const TransitionDataset& random, double random_ratio,
                               std::uint64_t seed, MixGranularity granularity) {
  if (expert.num_states() != random.num_states() || expert.num_actions() != random.num_actions() ||
      expert.source_id() != random.source_id()) {
    throw std::invalid_argument("mix_datasets: datasets come from different MDPs");
  }
  if (!(random_ratio >= 0.0 && random_ratio <= 1.0)) throw std::invalid_argument("mix_datasets: ratio must lie in [0,1]");

  const std::size_t total = std::min(expert.size(), random.size());
  const auto n_random = static_cast<std::size_t>(std::llround(random_ratio * static_cast<double>(total)));
  const std::size_t n_expert = total - n_random;
  Rng rng(seed);

  std::vector<Transition> mixed;
  std::vector<std::size_t> starts;
  if (granularity == MixGranularity::transition) {
    auto take = [&](const TransitionDataset& source, std::size_t n) {
      std::vector<std::size_t> idx(source.size());
      std::iota(idx.begin(), idx.end(), 0);
      seeded_shuffle(idx, rng);
      for (std::size_t i = 0; i < n; ++i) mixed.push_back(source[idx[i]]);
    };
    take(random, n_random);
    take(expert, n_expert);
    seeded_shuffle(mixed, rng);
    // every transition is its own fragment; keeps episode inference from merging unrelated steps
    for (std::size_t i = 0; i < mixed.size(); ++i) starts.push_back(i);
  } else {
    // whole episodes until the transition budget of each side is met
    std::vector<std::vector<Transition>> episodes;
    auto take = [&](const TransitionDataset& source, std::size_t budget) {
      std::vector<std::size_t> idx(source.empty() ? 0 : source.episode_starts().size());
      std::iota(idx.begin(), idx.end(), 0);
      seeded_shuffle(idx, rng);
      std::size_t used = 0;
      for (std::size_t e : idx) {
        if (used >= budget) break;
        const auto ep = source.episode(e);
        const std::size_t n = std::min(ep.size(), budget - used);
        episodes.emplace_back(ep.begin(), ep.begin() + static_cast<std::ptrdiff_t>(n));
        used += n;
      }
    };
    take(random, n_random);
    take(expert, n_expert);
    seeded_shuffle(episodes, rng);
    for (const auto& ep : episodes) {
      starts.push_back(mixed.size());
      mixed.insert(mixed.end(), ep.begin(), ep.end());
    }
  }
  if (mixed.empty()) starts.clear();
  return TransitionDataset(expert.num_states(), expert.num_actions(), std::move(mixed), expert.source_id(),
                           std::move(starts));
}

std::string dataset_to_jsonl(const TransitionDataset& dataset) {
  std::string out;
  char buffer[160];
  for (const auto& t : dataset.transitions()) {
    std::snprintf(buffer, sizeof(buffer), "{\"s\":%d,\"a\":%d,\"r\":%.17g,\"sp\":%d,\"done\":%s}\n", t.state, t.action,
                  t.reward, t.next_state, t.done ? "true" : "false");
    out += buffer;
  }
  return out;
}

void save_dataset(const TransitionDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write dataset file " + path.string());
  out << dataset_to_jsonl(dataset);
  if (!out) throw std::runtime_error("failed writing dataset file " + path.string());
}

TransitionDataset dataset_from_jsonl(const std::string& text, std::optional<int> num_states,
                                     std::optional<int> num_actions) {
  std::vector<Transition> transitions;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool last_line_terminated = text.empty() || text.back() == '\n';
  int max_state = -1;
  int max_action = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    try {
      Transition t;
      t.state = record.at("s").get<int>();
      t.action = record.at("a").get<int>();
      t.reward = record.at("r").get<double>();
      t.next_state = record.at("sp").get<int>();
      t.done = record.at("done").get<bool>();
      if (t.state < 0 || t.action < 0 || t.next_state < 0) throw ParseError("negative index", line_no);
      max_state = std::max({max_state, t.state, t.next_state});
      max_action = std::max(max_action, t.action);
      transitions.push_back(t);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad transition record: ") + e.what(), line_no);
    }
  }
  if (!last_line_terminated) throw ParseError("truncated final record (missing newline)", line_no);
  const int states = num_states.value_or(std::max(max_state + 1, 1));
  const int actions = num_actions.value_or(std::max(max_action + 1, 1));
  if (max_state >= states || max_action >= actions) {
    throw ParseError("transition index exceeds the declared dimensions", 0);
  }
  return TransitionDataset(states, actions, std::move(transitions));
}

TransitionDataset load_dataset(const std::filesystem::path& path, std::optional<int> num_states,
                               std::optional<int> num_actions) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open dataset file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return dataset_from_jsonl(buffer.str(), num_states, num_actions);
}

}  // namespace odaf
