//! Name-keyed registries of interchangeable strategies.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

type Factory<T> = Box<dyn Fn() -> Box<T> + Send + Sync>;

/// Maps names to constructors of boxed trait objects.
pub struct Registry<T: ?Sized> {
    kind: &'static str,
    factories: BTreeMap<String, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, factory: impl Fn() -> Box<T> + Send + Sync + 'static) {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn create(&self, name: &str) -> Result<Box<T>> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Shape {
        fn sides(&self) -> u32;
    }
    struct Tri;
    impl Shape for Tri {
        fn sides(&self) -> u32 {
            3
        }
    }

    #[test]
    fn register_and_create() {
        let mut r: Registry<dyn Shape> = Registry::new("shape");
        r.register("tri", || Box::new(Tri));
        assert_eq!(r.create("tri").unwrap().sides(), 3);
        assert_eq!(r.names(), vec!["tri"]);
        let err = r.create("square").err().unwrap();
        assert_eq!(err.to_string(), "unknown shape `square`");
    }
}
