"""Why naive gradient descent in polar coordinates gets stuck.

Minimizes f(x, y) = (x + 1)^2 + y^2 starting at Cartesian (1, 0), which in
polar coordinates is (r, theta) = (1, 0) with the optimum sitting exactly at
theta + pi. Three treatments of the radial coordinate are compared:

  truncate   - clamp r at 0: the iterate slams into the origin and theta
               stops receiving gradient, so it never escapes;
  dynamic_lr - radial step scaled by r: r decays but stays positive, no
               hard stall, though progress through the origin is slow;
  reconnect  - let r go negative and fold (-r, theta) to (r, theta + pi):
               the iterate passes straight through and converges.

Run:  python3 demos/02_polar_stagnation.py
"""

import math

from hopolar.polarlab import PolarSimConfig, simulate, export_trajectory

for mode in ("truncate", "dynamic_lr", "reconnect"):
    cfg = PolarSimConfig(mode=mode, lr=0.3, alpha=0.05, steps=300,
                         start=(1.0, 0.0))
    traj = simulate(cfg)
    r, theta, x, y, f = traj[-1]
    dist = math.hypot(x + 1.0, y)
    stalled = sum(1 for row in traj if row[0] == 0.0)
    print(f"{mode:10s}: final (x, y) = ({x:+.6f}, {y:+.6f})  f = {f:.2e}  "
          f"distance to optimum = {dist:.4f}  steps at r=0: {stalled}")

    out = f"/tmp/polar_{mode}.csv"
    export_trajectory(traj, out)
    print(f"{'':10s}  trajectory written to {out}")

print()
print("truncate ends a unit away from the optimum (radial stagnation with")
print("angular freezing); reconnect converges because folding the radius")
print("through the origin keeps the angular gradient alive.")

print()
print("momentum makes the stall oscillatory rather than fixing it:")
cfg = PolarSimConfig(mode="truncate", lr=0.3, momentum=0.8, steps=300,
                     start=(1.0, 0.0))
traj = simulate(cfg)
r, theta, x, y, f = traj[-1]
print(f"truncate + momentum 0.8: final f = {f:.4f} at (x, y) = "
      f"({x:+.4f}, {y:+.4f})")
