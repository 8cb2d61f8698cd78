//! Random executions.
//!
//! All randomness comes from one `u64` seed expanded by ChaCha8
//! (`rand_chacha::ChaCha8Rng::seed_from_u64`), so a seed and a
//! configuration identify a trace on every platform.
//!
//! Before each generator call the origin replica is brought up to date
//! with two earlier generations picked at random: for an event, a random
//! prefix of its messages; for an announcement, the announcement itself.
//! Whatever those messages causally depend on is delivered first. The
//! origin therefore observes other replicas' work only partially, which is
//! what produces concurrent writes.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Config, ConfigInvalid, OpMix};
use super::trace::Trace;
use crate::model::clock::Progress;
use crate::model::effector::MessageRef;
use crate::model::ids::{AnnounceId, Attr, EventId, ObjectKey, ReplicaId};
use crate::model::world::{Generation, World};
use crate::refs::ops::{is_reachable, IgnoreSet, Op};

/// Attributes every randomly created object carries.
pub const ATTRS: [&str; 2] = ["a", "b"];

/// Probability that a created object is a root.
const ROOT_PROBABILITY: f64 = 0.7;

/// Probability of drawing the first attribute outright before falling
/// back to a uniform choice.
const FIRST_ATTR_BIAS: f64 = 0.8;

/// Probability of picking operands among objects the origin can use,
/// rather than among every object it knows.
const USABLE_BIAS: f64 = 0.85;

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_execution(seed: u64, config: &Config) -> Result<Trace, ConfigInvalid> {
    config.validate()?;
    let mut rng = rng_for(seed);
    let mut world = World::new(config.replicas, config.mode);
    for _ in 0..config.events {
        if rng.random_range(0..1000) < config.sync_permille {
            sync_burst(&mut rng, &mut world);
        }
        let origin = ReplicaId(rng.random_range(0..config.replicas) as u16);
        for _ in 0..2 {
            let n = world.generation_count();
            if n == 0 {
                break;
            }
            match world.nth_generation(rng.random_range(0..n)) {
                Some(Generation::Event(id)) => {
                    let count = world.event(id).map_or(0, |e| e.message_count(world.mode()));
                    let upto = rng.random_range(0..=count);
                    deliver_upto(&mut world, origin, id, upto);
                }
                Some(Generation::Announce(id)) => deliver_announcement(&mut world, origin, id),
                None => {}
            }
        }
        let op = draw_op(&mut rng, &mut world, origin, &config.mix);
        let _ = world.generate(origin, op);
    }
    Ok(Trace::from_world(seed, config.clone(), &world))
}

/// Two rounds in which every replica, in a random order, receives
/// everything outstanding and then announces.
fn sync_burst(rng: &mut ChaCha8Rng, world: &mut World) {
    let mut order: Vec<ReplicaId> = world.replica_ids().collect();
    for _ in 0..2 {
        order.shuffle(rng);
        for &r in &order {
            catch_up(world, r);
            let _ = world.generate(r, Op::Announce);
        }
    }
}

/// Delivers everything outstanding at `replica`.
pub fn catch_up(world: &mut World, replica: ReplicaId) {
    for msg in world.outstanding(replica) {
        if !world.is_applied(replica, msg) {
            let _ = world.deliver(replica, msg);
        }
    }
}

/// Delivers the first `upto` messages of `event` to `replica`, preceded by
/// everything they causally depend on.
pub fn deliver_upto(world: &mut World, replica: ReplicaId, event: EventId, upto: u32) {
    let Some(e) = world.event(event) else { return };
    let upto = upto.min(e.message_count(world.mode()));
    let from = world.applied_prefix(replica, e);
    if from >= upto {
        return;
    }
    let deps = e.deps.clone();
    satisfy(world, replica, &deps);
    for index in from..upto {
        let msg = MessageRef::Effector { event, index };
        if !world.is_applied(replica, msg) {
            let _ = world.deliver(replica, msg);
        }
    }
}

/// Brings `replica` up to at least `target` progress.
pub fn satisfy(world: &mut World, replica: ReplicaId, target: &Progress) {
    let origins: Vec<ReplicaId> = target
        .clock
        .iter()
        .map(|(r, _)| r)
        .chain(target.partial.keys().copied())
        .collect();
    for origin in origins {
        let want = target.position(origin);
        let have = world.replica(replica).progress.position(origin);
        if have >= want {
            continue;
        }
        for seq in have.events + 1..=want.events {
            deliver_upto(world, replica, EventId { replica: origin, seq }, u32::MAX);
        }
        if want.prefix > 0 {
            let next = EventId {
                replica: origin,
                seq: want.events + 1,
            };
            deliver_upto(world, replica, next, want.prefix);
        }
    }
}

/// Delivers announcement `id` with its FIFO predecessors and causal past.
pub fn deliver_announcement(world: &mut World, replica: ReplicaId, id: AnnounceId) {
    for seq in 1..=id.seq {
        let id = AnnounceId {
            replica: id.replica,
            seq,
        };
        let msg = MessageRef::Announce { id };
        if world.is_applied(replica, msg) {
            continue;
        }
        let Some(clock) = world.announcement(id).map(|a| a.clock.clone()) else {
            return;
        };
        satisfy(world, replica, &clock);
        let _ = world.deliver(replica, msg);
    }
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, preferred: &[T], fallback: &[T]) -> Option<T> {
    if !preferred.is_empty() && (fallback.len() == preferred.len() || rng.random_bool(USABLE_BIAS)) {
        preferred.choose(rng).copied()
    } else {
        fallback.choose(rng).copied()
    }
}

/// Destination of a write: a root half of the time when there is one.
fn pick_slot(rng: &mut ChaCha8Rng, roots: &[ObjectKey], usable: &[ObjectKey], known: &[ObjectKey]) -> ObjectKey {
    match roots.choose(rng) {
        Some(&k) if rng.random_bool(0.5) => k,
        _ => pick(rng, usable, known).expect("known objects"),
    }
}

/// The first attribute is drawn more often than the others so that
/// writes collide on it.
fn attr(rng: &mut ChaCha8Rng) -> Attr {
    if rng.random_bool(FIRST_ATTR_BIAS) {
        Attr::from(ATTRS[0])
    } else {
        Attr::from(*ATTRS.choose(rng).expect("non-empty"))
    }
}

fn draw_kind(rng: &mut ChaCha8Rng, mix: &OpMix) -> &'static str {
    let weights = mix.weights();
    let mut x = rng.random_range(0..mix.total());
    for (kind, w) in OpMix::KINDS.iter().zip(weights) {
        if x < w as u64 {
            return kind;
        }
        x -= w as u64;
    }
    unreachable!("weights sum to the total")
}

/// Draws an operation for `origin`. Operands favour objects the origin can
/// actually use, but any known object may be picked, so some draws fail
/// their preconditions and are recorded as failed events.
fn draw_op(rng: &mut ChaCha8Rng, world: &mut World, origin: ReplicaId, mix: &OpMix) -> Op {
    let kind = draw_kind(rng, mix);
    let rep = world.replica(origin);
    let known: Vec<ObjectKey> = rep.objects.keys().copied().collect();
    let usable: Vec<ObjectKey> = rep
        .objects
        .values()
        .filter(|o| !o.deleted && is_reachable(o, &rep.handles))
        .map(|o| o.key)
        .collect();
    // Roots are reachable everywhere, so writes aimed at them are the ones
    // most likely to race with another replica's write to the same slot.
    let roots: Vec<ObjectKey> = usable.iter().copied().filter(|k| rep.objects[k].root).collect();
    let candidates: Vec<ObjectKey> = rep
        .objects
        .values()
        .filter(|o| !o.deleted && !o.root)
        .map(|o| o.key)
        .collect();
    if known.is_empty() && !matches!(kind, "announce") {
        let key = world.fresh_key(origin);
        return Op::create(key, rng.random_bool(ROOT_PROBABILITY), &ATTRS);
    }
    match kind {
        "create" => {
            let key = world.fresh_key(origin);
            Op::create(key, rng.random_bool(ROOT_PROBABILITY), &ATTRS)
        }
        "init" => Op::Init {
            source: pick_slot(rng, &roots, &usable, &known),
            attr: attr(rng),
            target: pick(rng, &usable, &known).expect("known objects"),
        },
        "assign" => {
            let holders: Vec<(ObjectKey, &Attr)> = usable
                .iter()
                .flat_map(|k| {
                    rep.objects[k]
                        .attrs
                        .iter()
                        .filter(|(_, out)| matches!(out.single(), Some(Some(_))))
                        .map(move |(a, _)| (*k, a))
                })
                .collect();
            let (src, src_attr) = match holders.choose(rng) {
                Some(&(k, a)) if rng.random_bool(USABLE_BIAS) => (k, a.clone()),
                _ => (pick(rng, &usable, &known).expect("known objects"), attr(rng)),
            };
            Op::Assign {
                dst: pick_slot(rng, &roots, &usable, &known),
                dst_attr: attr(rng),
                src,
                src_attr,
            }
        }
        "assign-null" => Op::AssignNull {
            source: pick_slot(rng, &roots, &usable, &known),
            attr: attr(rng),
        },
        "invoke" => Op::Invoke {
            source: pick(rng, &usable, &known).expect("known objects"),
            attr: attr(rng),
        },
        "may-delete" => Op::MayDelete {
            target: pick(rng, &candidates, &known).expect("known objects"),
            last: IgnoreSet::SelfCycle,
        },
        "delete" => Op::Delete {
            target: pick(rng, &candidates, &known).expect("known objects"),
            last: IgnoreSet::SelfCycle,
        },
        "announce" => Op::Announce,
        other => unreachable!("unknown operation kind {other}"),
    }
}
