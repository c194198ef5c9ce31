"""
Radio link failure and handover failure
=======================================

Out-of-sync indications (SINR below Q_out) start timer T310 after N310 ticks in a
row. If T310 runs out the link fails; a handover command that arrives while T310
is running fails as well.
"""

from nrhandover.protocol import ConnectionState, EventKind, ProtocolConfig, agent_step, rlf_step

cfg = ProtocolConfig()

###############################################################################
# A link stuck at -9 dB: T310 starts on the 10th bad tick and expires 1 s later.
# After 200 ms of recovery the UE reconnects to the strongest cell.

state = ConnectionState.initial(0, 2)
for t in range(140):
    state, events = rlf_step(state, t, [-9.0, 3.0], cfg.rlf)
    for e in events:
        if e.kind is not EventKind.OOS:
            print(f"tick {t:4d}  {e.kind.name}  serving={e.serving}")

###############################################################################
# The same bad link, but the policy asks for a handover at tick 9. The command
# is due at tick 14, while T310 is already running: handover failure.

state = ConnectionState.initial(0, 2)
for t in range(20):
    state, events = agent_step(state, t, 1 if t == 9 else None, [-9.0, 5.0], cfg)
    kinds = [e.kind.name for e in events if e.kind is not EventKind.OOS]
    if kinds:
        print(f"tick {t:4d}  {kinds}")
