//! Access policies: ordered rules with numeric state conditions and a default effect.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SubjectRole {
    User,
    Operator,
    Supervisor,
    Controller,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Effect {
    Allow,
    Deny,
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Effect::Allow => "ALLOW",
            Effect::Deny => "DENY",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub var: String,
    pub cmp: Cmp,
    pub value: f64,
}

impl Condition {
    pub fn new(var: &str, cmp: Cmp, value: f64) -> Self {
        Self {
            var: var.into(),
            cmp,
            value,
        }
    }

    /// A condition on a variable absent from `state` does not hold.
    pub fn holds(&self, state: &BTreeMap<String, f64>) -> bool {
        let Some(&v) = state.get(&self.var) else {
            return false;
        };
        match self.cmp {
            Cmp::Lt => v < self.value,
            Cmp::Le => v <= self.value,
            Cmp::Gt => v > self.value,
            Cmp::Ge => v >= self.value,
            Cmp::Eq => v == self.value,
        }
    }
}

/// `None` subject and `"*"` action/object match anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRule {
    pub subject: Option<SubjectRole>,
    pub action: String,
    pub object: String,
    pub condition: Option<Condition>,
    pub effect: Effect,
}

impl PolicyRule {
    pub fn new(subject: Option<SubjectRole>, action: &str, effect: Effect) -> Self {
        Self {
            subject,
            action: action.into(),
            object: "*".into(),
            condition: None,
            effect,
        }
    }

    pub fn on(mut self, object: &str) -> Self {
        self.object = object.into();
        self
    }

    pub fn when(mut self, c: Condition) -> Self {
        self.condition = Some(c);
        self
    }

    fn matches(&self, req: &AccessRequest, state: &BTreeMap<String, f64>) -> bool {
        self.subject.is_none_or(|s| s == req.role)
            && (self.action == "*" || self.action == req.action)
            && (self.object == "*" || self.object == req.object)
            && self.condition.as_ref().is_none_or(|c| c.holds(state))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRequest {
    pub subject: u64,
    pub role: SubjectRole,
    pub action: String,
    pub object: String,
}

impl AccessRequest {
    pub fn new(subject: u64, role: SubjectRole, action: &str) -> Self {
        Self {
            subject,
            role,
            action: action.into(),
            object: "*".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySet {
    pub rules: Vec<PolicyRule>,
    pub default: Effect,
}

impl PolicySet {
    pub fn new(default: Effect) -> Self {
        Self {
            rules: Vec::new(),
            default,
        }
    }

    pub fn with(mut self, rule: PolicyRule) -> Self {
        self.rules.push(rule);
        self
    }

    /// The first rule that matches, if any.
    pub fn first_match(&self, req: &AccessRequest, state: &BTreeMap<String, f64>) -> Option<&PolicyRule> {
        self.rules.iter().find(|r| r.matches(req, state))
    }

    /// Room-climate rules: heating only while at or below 25 degrees.
    pub fn climate() -> Self {
        PolicySet::new(Effect::Deny)
            .with(PolicyRule::new(None, "heat-on", Effect::Allow).when(Condition::new("temperature", Cmp::Le, 25.0)))
            .with(PolicyRule::new(None, "heat-off", Effect::Allow))
    }

    /// Defaults installed on a controller. Locals decide routine device
    /// actions; configuration changes need a supervisor and are decided higher up.
    pub fn for_controller_level(level: u32) -> Self {
        let mut set = PolicySet::new(Effect::Deny)
            .with(PolicyRule::new(Some(SubjectRole::User), "reconfigure", Effect::Deny))
            .with(PolicyRule::new(None, "sense", Effect::Allow))
            .with(PolicyRule::new(None, "actuate", Effect::Allow).when(Condition::new("battery", Cmp::Ge, 0.1)))
            .with(PolicyRule::new(None, "actuate", Effect::Deny).when(Condition::new("battery", Cmp::Lt, 0.1)));
        if level <= 1 {
            set = set
                .with(PolicyRule::new(
                    Some(SubjectRole::Supervisor),
                    "reconfigure",
                    Effect::Allow,
                ))
                .with(PolicyRule::new(
                    Some(SubjectRole::Controller),
                    "reconfigure",
                    Effect::Allow,
                ));
        }
        set
    }
}

pub fn check_policy(policies: &PolicySet, req: &AccessRequest, state: &BTreeMap<String, f64>) -> Effect {
    policies.first_match(req, state).map_or(policies.default, |r| r.effect)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(t: f64) -> BTreeMap<String, f64> {
        BTreeMap::from([("temperature".to_string(), t)])
    }

    #[test]
    fn temperature_threshold() {
        let p = PolicySet::climate();
        let on = AccessRequest::new(1, SubjectRole::User, "heat-on");
        assert_eq!(check_policy(&p, &on, &state(30.0)), Effect::Deny);
        assert_eq!(check_policy(&p, &on, &state(20.0)), Effect::Allow);
        let off = AccessRequest::new(1, SubjectRole::User, "heat-off");
        assert_eq!(check_policy(&p, &off, &state(30.0)), Effect::Allow);
    }

    #[test]
    fn user_cannot_reconfigure() {
        let p = PolicySet::for_controller_level(0);
        let req = AccessRequest::new(1, SubjectRole::User, "reconfigure");
        assert_eq!(check_policy(&p, &req, &BTreeMap::new()), Effect::Deny);
        let sup = AccessRequest::new(2, SubjectRole::Supervisor, "reconfigure");
        assert_eq!(check_policy(&p, &sup, &BTreeMap::new()), Effect::Allow);
    }

    #[test]
    fn default_when_nothing_matches() {
        let p = PolicySet::new(Effect::Allow);
        let req = AccessRequest::new(1, SubjectRole::Operator, "anything");
        assert_eq!(p.first_match(&req, &BTreeMap::new()), None);
        assert_eq!(check_policy(&p, &req, &BTreeMap::new()), Effect::Allow);
    }
}
