"""Train the factorized toy policy with GRPO on a single synthetic image.

The reward table enumerates all 8192 joint actions once (about half a minute),
after which training is table lookups.  The default learning rate barely moves
a categorical policy in a few hundred plain gradient steps, so this demo also
runs a larger one.
"""

from layerparse.grpo import (GrpoConfig, ToyPolicy, expected_reward, kl_to_reference,
                             make_toy_task, reward_table, table_reward_fn, train)

task = make_toy_task(0)
print("target:", task.target)
table = reward_table(task)
fn = table_reward_fn({task.image_id: table})

for lr in (1e-4, 0.1):
    start = ToyPolicy.uniform(task.space, [task.image_id])
    cfg = GrpoConfig(total_steps=300, learning_rate=lr, seed=0)
    policy, log = train([task.image_id], cfg, fn, policy=start)
    print(f"lr={lr:g}: expected reward {expected_reward(start, task.image_id, table, 0.8):.3f}"
          f" -> {expected_reward(policy, task.image_id, table, 0.8):.3f},"
          f" KL to reference {kl_to_reference(policy, start):.3f},"
          f" last sampled group mean {log[-1]['mean_reward']:.3f}")
