use authds::region::{AccessKind, JournalEntry};
use authds::{
    AdversaryModel, AdversaryScript, AuthQueue, AuthRbTree, AuthStack, Error, SecureContext, TamperAction, Trigger,
};

fn ctx(seed: u64) -> std::rc::Rc<SecureContext> {
    SecureContext::from_config("cmac128", seed).unwrap()
}

#[test]
fn fast_adversary_rewriting_every_load_is_caught() {
    let c = ctx(1);
    let mut s = AuthStack::new(&c).unwrap();
    s.push(b"alpha").unwrap();
    s.push(b"bravo").unwrap();
    let top = s.entry_layouts().unwrap()[1].data.clone();
    let script = AdversaryScript::new(
        AdversaryModel::Fast,
        vec![TamperAction::new(Trigger::EveryLoad, top.start, b"BRAVO".to_vec())],
    )
    .unwrap();
    s.region_mut().attach_script(script);
    assert_eq!(s.top(), Err(Error::Mac));
    assert_eq!(s.pop(), Err(Error::Mac));
}

#[test]
fn fast_adversary_writing_back_the_same_bytes_is_harmless() {
    let c = ctx(2);
    let mut q = AuthQueue::new(&c).unwrap();
    q.enqueue(b"one").unwrap();
    q.enqueue(b"two").unwrap();
    let e = q.entry_layouts().unwrap()[0].data.clone();
    let script = AdversaryScript::new(
        AdversaryModel::Fast,
        vec![TamperAction::new(Trigger::EveryLoad, e.start, b"one".to_vec())],
    )
    .unwrap();
    q.region_mut().attach_script(script);
    assert_eq!(q.front().unwrap(), b"one");
    q.dequeue().unwrap();
    assert_eq!(q.front().unwrap(), b"two");
}

#[test]
fn scripts_must_match_their_model() {
    let load = TamperAction::new(Trigger::EveryLoad, 0, vec![1]);
    let between = TamperAction::new(Trigger::BetweenOps, 0, vec![1]);
    let point = TamperAction::new(Trigger::AtVulnerablePoint("p".into()), 0, vec![1]);
    assert_eq!(AdversaryScript::new(AdversaryModel::Slow, vec![load.clone()]).unwrap_err(), Error::ModelMismatch);
    assert_eq!(AdversaryScript::new(AdversaryModel::Single, vec![between.clone()]).unwrap_err(), Error::ModelMismatch);
    assert_eq!(AdversaryScript::new(AdversaryModel::Slow, vec![point]).unwrap_err(), Error::ModelMismatch);
    assert!(AdversaryScript::new(AdversaryModel::Fast, vec![load]).is_ok());
    assert!(AdversaryScript::slow(vec![between]).is_ok());
}

#[test]
fn single_adversary_acts_only_at_marked_points() {
    let c = ctx(3);
    let mut t = AuthRbTree::new(&c).unwrap();
    for k in [5u64, 3, 8] {
        t.insert(k, b"v").unwrap();
    }
    let off = t.node_offsets().unwrap()[0];
    let value = t.node_layout(off).unwrap().value;
    let script = AdversaryScript::new(
        AdversaryModel::Single,
        vec![TamperAction::new(
            Trigger::AtVulnerablePoint("after-insert".into()),
            value.start,
            b"x".to_vec(),
        )],
    )
    .unwrap();

    t.region_mut().enable_journal();
    assert_eq!(t.region_mut().fire_vulnerable_point(&script, "elsewhere").unwrap(), 0);
    t.find(3).unwrap();
    t.insert(9, b"w").unwrap();
    let op_journal = t.region_mut().take_journal();
    assert!(op_journal.iter().all(|e| e.op != AccessKind::Tamper));

    assert_eq!(t.region_mut().fire_vulnerable_point(&script, "after-insert").unwrap(), 1);
    let tamper = t.region_mut().take_journal();
    assert_eq!(
        tamper,
        vec![JournalEntry {
            op: AccessKind::Tamper,
            offset: value.start,
            len: 1
        }]
    );
    assert_eq!(t.find(3), Err(Error::Mac));
}

#[test]
fn slow_adversary_fires_between_operations_only() {
    let c = ctx(4);
    let mut s = AuthStack::new(&c).unwrap();
    s.push(b"abc").unwrap();
    let size_off = s.header_len() - 16;
    let script = AdversaryScript::slow(vec![TamperAction::new(Trigger::BetweenOps, size_off, 7u64.to_le_bytes().to_vec())])
        .unwrap();
    s.region_mut().enable_journal();
    s.top().unwrap();
    let journal = s.region_mut().take_journal();
    assert!(!journal.is_empty());
    assert!(journal.iter().all(|e| e.op != AccessKind::Tamper));
    assert_eq!(s.between_ops(&script).unwrap(), 1);
    assert_eq!(s.size(), Err(Error::Mac));
}

#[test]
fn whole_region_replay_from_another_instance_fails() {
    let c = ctx(5);
    let mut a = AuthStack::new(&c).unwrap();
    let mut b = AuthStack::new(&c).unwrap();
    for v in [b"p".as_slice(), b"q"] {
        a.push(v).unwrap();
        b.push(v).unwrap();
    }
    let bytes = a.region().as_bytes().to_vec();
    b.region_mut().tamper(0, &bytes).unwrap();
    assert_eq!(b.top(), Err(Error::Mac));
    assert_eq!(a.pop().unwrap(), b"q");
}

#[test]
fn untampered_runs_are_reproducible_from_the_store_history() {
    let run = || {
        let c = ctx(6);
        let mut q = AuthQueue::new(&c).unwrap();
        q.region_mut().enable_journal();
        for i in 0..50u32 {
            q.enqueue(&i.to_le_bytes()).unwrap();
            if i % 3 == 0 {
                q.dequeue().unwrap();
            }
        }
        let journal = q.region().journal_jsonl();
        (journal, q.region().as_bytes().to_vec())
    };
    let (j1, b1) = run();
    let (j2, b2) = run();
    assert_eq!(j1, j2);
    assert_eq!(b1, b2);
    for line in j1.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(matches!(v["op"].as_str(), Some("load" | "store")));
        assert!(v["offset"].is_u64() && v["len"].is_u64());
    }
}
