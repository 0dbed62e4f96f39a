"""Chat with the agent over the chemistry trace using the deterministic mock.

The mock backend reads the schema out of its own prompt, so the same
pipeline, retries, provenance, and plotting paths run exactly as they
would against a hosted model.

Run: python demos/04_chat_with_agent.py
"""

from provlens import Agent, ContextManager, Hub, MockBackend, chemistry_trace_path, read_trace

hub = Hub()
agent_feed = hub.subscribe("agent")
ctx = ContextManager()
for record in read_trace(chemistry_trace_path()):
    ctx.ingest(record)

agent = Agent(ctx, MockBackend(), hub=hub)

for question in [
    "hello",
    "which bond has the highest dissociation free energy?",
    "What is the average bd_enthalpy for the bond labels that contain 'C-H'?",
    "plot a bar graph of bd_enthalpy per bond_id",
    "guideline: report bond energies in kcal/mol",
]:
    reply = agent.answer(question)
    print(f"Q: {question}")
    print(f"   kind={reply.kind}")
    if reply.rendered_ir:
        print(f"   query: {reply.rendered_ir}")
    print(f"   {reply.summary}")
    if reply.plot:
        pairs = list(zip(reply.plot["series"]["x"], reply.plot["series"]["y"]))
        print(f"   plot series: {pairs[:3]} ...")
    print()

# every turn published provenance: LLM interactions + one tool record
records = agent_feed.drain()
print(f"agent topic carried {len(records)} provenance records:")
for record in records[-4:]:
    print(f"  {record.type:16s} {record.activity_id:18s} informed_by="
          f"{len(record.was_informed_by or [])}")
