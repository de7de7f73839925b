# %% [markdown]
# From raw CSV files to a graph snapshot.
#
# Writes a synthetic CDR file and bank file with raw phone numbers hashed
# on the way in, applies the outlier filters and prints the accounting.

# %%
import io
import tempfile
from pathlib import Path

from incomenet.data_model import BINARY_SCHEMA
from incomenet.graph import build_graph, read_snapshot, write_snapshot
from incomenet.ingestion import FilterConfig, apply_filters, income_by_age_summary, join, parse_bank, parse_cdr
from incomenet.synthgen import SynthConfig, generate

work = Path(tempfile.mkdtemp())
generate(SynthConfig(n_users=3000, seed=5), BINARY_SCHEMA).write(work)
print("wrote", sorted(p.name for p in work.iterdir()))

# %% parse (files already carry hashed ids, so no key is needed)
with open(work / "cdr.csv") as fh:
    records, cdr_rep = parse_cdr(fh, source="cdr.csv")
with open(work / "bank.csv") as fh:
    clients, bank_rep = parse_bank(fh, source="bank.csv")
print(cdr_rep.to_dict()["accepted"], "CDR rows,", bank_rep.accepted, "bank rows")

# a bad row is counted and skipped, never silently dropped
_, rep = parse_cdr(io.StringIO("origin,destination,timestamp,kind,duration,lat,lon\naa,bb,1,sms,30,,\n"))
print("rejections:", dict(rep.rejected))

# %% join and filter
data = join(records, clients)
kept, frep = apply_filters(data, FilterConfig(), BINARY_SCHEMA)
for k, v in frep.to_dict().items():
    print(f"  {k}: {v}")

# %% graph, snapshot and the age table
g = build_graph(kept, BINARY_SCHEMA)
write_snapshot(g, work / "snap")
again = read_snapshot(work / "snap")
print(f"graph: {g.n_nodes} nodes, {g.n_edges} edges; reloaded {again.n_nodes} nodes")
for b in income_by_age_summary(kept.clients)[:4]:
    print(f"  ages [{b.lo},{b.hi}): n={b.n} median income={b.median:.0f}")
