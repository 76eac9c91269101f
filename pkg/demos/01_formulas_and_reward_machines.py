# Propositional guards and reward machines, step by step.
#
# A reward machine reads one truth assignment per environment step and
# pays out rewards on its transitions. Guards are plain propositional
# formulas over the grid vocabulary.

from pathlib import Path

from rmgcr.logic import parse_formula, evaluate, to_dnf
from rmgcr.rm import load_rm, rm_step, run_rm

VOCAB = ("red", "green", "blue", "triangle", "circle")
TASKS = Path(__file__).resolve().parent.parent / "tasks"

# --- formulas ---------------------------------------------------------

f = parse_formula("red & (triangle | circle)", VOCAB)
print("parsed:", f)
print("holds under {red, circle}?", evaluate(f, {"red", "circle"}))
print("holds under {red}?       ", evaluate(f, {"red"}))

# DNF puts every guard into the max/min shape the composition uses
g = parse_formula("!(red | green) & triangle", VOCAB)
print("formula:", g)
print("as DNF: ", to_dnf(g))

# contradictions vanish entirely
print("red & !red normalizes to:", to_dnf(parse_formula("red & !red", VOCAB)))

# --- reward machines --------------------------------------------------

sequence = load_rm(TASKS / "sequence.rm")
print()
print("Sequence task: red triangle, then green, then a non-triangle blue")
print("states:", sequence.num_states, "terminals:", sorted(sequence.terminals))

trace = [{"red", "triangle"}, {"green", "triangle"}, {"blue", "circle"}]
rewards, states, done_at = run_rm(sequence, trace)
print("trace   ", [sorted(w) for w in trace])
print("rewards ", rewards)
print("states  ", states, "terminated at step", done_at)

# nothing fires, the machine just waits on an implicit self-loop
step = rm_step(sequence, 1, {"green"})
print("irrelevant label keeps state:", step)

# the lava machine charges -1 per step until the agent escapes
lava = load_rm(TASKS / "lava.rm")
rewards, _, done_at = run_rm(lava, [{"lava"}, {"lava"}, set()])
print()
print("lava run: rewards", rewards, "terminated at", done_at)

# the loop machine never terminates; each full cycle pays 1
loop = load_rm(TASKS / "loop.rm")
cycle = [{"red", "triangle"}, {"green", "triangle"}, {"blue", "triangle"}]
rewards, _, done_at = run_rm(loop, cycle * 3)
print("three loop cycles: total reward", sum(rewards), "terminated:", done_at)
